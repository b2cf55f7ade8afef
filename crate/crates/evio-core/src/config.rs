//! Placeholder, replaced during the build.
