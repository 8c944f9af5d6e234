//! Interactive demo exports (placeholder).
