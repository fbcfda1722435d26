pub mod autodiff;
pub mod error;
pub mod io;
pub mod lexicon;
pub mod metrics;
pub mod model;
pub mod report;
pub mod synthetic;
pub mod text;
pub mod train;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/autodiff.md")]
    pub struct Autodiff;
    #[doc = include_str!("../../../book/src/lexicons.md")]
    pub struct Lexicons;
    #[doc = include_str!("../../../book/src/text.md")]
    pub struct Text;
    #[doc = include_str!("../../../book/src/model.md")]
    pub struct Model;
    #[doc = include_str!("../../../book/src/training.md")]
    pub struct Training;
    #[doc = include_str!("../../../book/src/checkpoint.md")]
    pub struct Checkpoint;
    #[doc = include_str!("../../../book/src/synthetic.md")]
    pub struct Synthetic;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
