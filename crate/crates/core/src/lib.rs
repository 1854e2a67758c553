pub mod concavity_test;
pub mod deconv;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod lcm;
pub mod numerics;
pub mod seeding;
