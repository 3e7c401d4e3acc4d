//! Sparse graph prompt tuning with integrate-and-fire spiking chains.
//!
//! A frozen, pretrained GCN encoder is adapted to few-shot node
//! classification by adding learned prompts to the node features. The prompt
//! for each node is a combination of `K` learned atoms. The spiking variants
//! make both the atom selection and the prompt entries sparse by passing them
//! through integrate-and-fire chains with soft reset.
//!
//! Module map:
//!
//! * [`graph`]: graphs, text I/O, normalization, SBM generator, splits, attacks
//! * [`autodiff`]: define-by-run reverse-mode tape, surrogate fire ops, FD checks
//! * [`spiking`]: IF and signed-IF chains plus the scalar reference simulation
//! * [`prompt`]: GPF, GPF-plus and the spiking prompt variants
//! * [`encoder`]: GCN encoder, edge-prediction pretraining, classifier head
//! * [`tuner`]: downstream tuning loop and experiment drivers
//! * [`report`]: CSV/JSON persistence

pub mod autodiff;
mod checkpoint;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod optim;
pub mod prompt;
pub mod report;
pub mod seeds;
pub mod spiking;
pub mod tensor;
pub mod tuner;

pub use autodiff::{check_gradients, GradCheck, Surrogate, Tape, Var};
pub use encoder::{
    classify, encode, pretrain_edgepred, pretrain_pipeline, ClassifierHead, EncoderModel,
    FeatureProjection, PretrainOptions, PretrainedEncoder,
};
pub use error::{Error, Result};
pub use graph::{
    generate_sbm, load_graph, normalize_adjacency, random_edge_attack, sample_few_shot, save_graph,
    FewShotSplit, Graph, NormalizedAdjacency, SbmParams,
};
pub use prompt::{
    gpf_plus_prompt, gpf_prompt, prompt_sparsity_report, spiking_prompt, PromptModel, PromptOutput,
    PromptVariant, SparsityReport,
};
pub use spiking::{if_chain, oracle_simulate, signed_if_chain, sparsity, ChainKind, SpikingConfig};
pub use tensor::{CsrMatrix, Tensor};
pub use tuner::{
    robustness, run_seeds, shots_experiment, sweep, tune, tune_selected, Method, RunRecord,
    TuneConfig,
};
