//! Evaluation metrics over code pairs and rendered images.

pub mod image;
pub mod text;
