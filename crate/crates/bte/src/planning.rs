//! Placeholder, replaced later in the build.
