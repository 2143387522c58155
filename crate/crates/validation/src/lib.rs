//! Holds the `acceptance` test target, which runs the end-to-end checks on
//! `rgq-core` and prints one PASS or FAIL line per check.
