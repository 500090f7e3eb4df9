#![allow(dead_code)]

pub mod diffgen;
pub mod prompts;
