//! Holds the `acceptance` test target, which runs every acceptance
//! criterion against the default design and exits nonzero on failure.
