pub mod baselines;
pub mod bayes_tot;
pub mod corpus;
pub mod error;
pub mod estep;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod schema;
pub mod snapshot;
pub mod stability;
pub mod synth;
pub mod train;

pub use baselines::{DirichletHyper, LdaState, OnlineConfig, TotState};
pub use bayes_tot::{BtotState, NyScheme, WbtotState};
pub use corpus::{Corpus, Document, RawDocument, TimeScale, Vocabulary};
pub use error::{Error, Result};
pub use model::{ModelKind, ModelSpec, ModelState};
pub use numerics::{BetaParams, BetaPriorParams, BetaPriorPosterior, MomentMethod, TimeSuffStats};
pub use train::{HeldoutMode, TrainConfig, TrainMode, TrainResult};
