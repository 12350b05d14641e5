#![allow(dead_code)]

pub mod bayes;
pub mod expr;
