//! `socq` command line: every pipeline stage reads and writes plain files so
//! stages can be rerun independently.

mod pipeline;

use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use socq_core::GroupCategory;
use socq_model::Variant;

pub use pipeline::*;

#[derive(Debug, Parser)]
#[command(name = "socq", version, about = "Socially-aware clarification question generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse archives, drop bots, short and non-English posts.
    Ingest(IngestArgs),
    #[command(subcommand)]
    Questions(QuestionsCmd),
    #[command(subcommand)]
    Profile(ProfileCmd),
    #[command(subcommand)]
    Embed(EmbedCmd),
    #[command(subcommand)]
    Dataset(DatasetCmd),
    #[command(subcommand)]
    Groups(GroupsCmd),
    #[command(subcommand)]
    Model(ModelCmd),
    #[command(subcommand)]
    Eval(EvalCmd),
    #[command(subcommand)]
    Humaneval(HumanevalCmd),
    /// HTTP preview service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub posts: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub comments: Vec<PathBuf>,
    #[arg(long)]
    pub bots: Option<PathBuf>,
    #[arg(long, default_value_t = socq_core::ingest::DEFAULT_MIN_WORDS)]
    pub min_words: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum QuestionsCmd {
    /// Every `?`-terminated sentence of every comment.
    Extract {
        #[arg(long)]
        comments: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate, then fit the information-seeking classifier on all rows.
    TrainFilter {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 13)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Filter {
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, default_value_t = socq_core::questions::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RelatedArgs {
    /// Target subreddit the askers were observed in.
    #[arg(long)]
    pub target: String,
    /// Related subreddits, one per line.
    #[arg(long, conflicts_with_all = ["allowlist", "subreddit_embeddings"])]
    pub related: Option<PathBuf>,
    /// `target<TAB>allowed neighbors` lines; needs --subreddit-embeddings.
    #[arg(long, requires = "subreddit_embeddings")]
    pub allowlist: Option<PathBuf>,
    #[arg(long, requires = "allowlist")]
    pub subreddit_embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = socq_core::profile::DEFAULT_RELATED_K)]
    pub related_k: usize,
}

#[derive(Debug, Subcommand)]
pub enum ProfileCmd {
    /// Population percentiles for EXPERTISE and TIME.
    Thresholds {
        #[arg(long)]
        history: PathBuf,
        #[command(flatten)]
        related: RelatedArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label every asker against frozen thresholds.
    Label {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long)]
        gazetteer: PathBuf,
        /// `subreddit<TAB>place` lines for location-specific subreddits.
        #[arg(long)]
        subreddit_geo: Option<PathBuf>,
        #[arg(long, default_value_t = socq_core::profile::DEFAULT_MIN_LOCATION_COMMENTS)]
        min_location_comments: usize,
        #[command(flatten)]
        related: RelatedArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum EmbedCmd {
    /// NPMI co-posting matrix reduced by truncated SVD.
    Subreddits {
        #[arg(long)]
        history: PathBuf,
        #[arg(long, default_value_t = socq_core::embeddings::EMBEDDING_DIM)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// One vector per asker, from subreddit vectors or comment text.
    Askers {
        #[arg(long)]
        history: PathBuf,
        #[arg(long, conflicts_with = "text", required_unless_present = "text")]
        subreddit: Option<PathBuf>,
        #[arg(long)]
        text: bool,
        #[arg(long, default_value_t = socq_core::embeddings::EMBEDDING_DIM)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Join posts, filtered questions and asker labels into training examples.
    Build {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        category: GroupCategory,
        #[arg(long)]
        asker_vectors: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split examples by post into train/valid/test files.
    Split {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        valid: f64,
        #[arg(long, default_value_t = 0.2)]
        test: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum GroupsCmd {
    /// Lexicon category rates per group value with Mann-Whitney tests.
    Diff {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        category: GroupCategory,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the question+post group classifier and attach per-example
    /// probabilities of the true group to the test set.
    Classify {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 32)]
        pca_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ModelCmd {
    Train {
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        category: GroupCategory,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        /// JSON model config; overrides --profile.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Profile::Toy)]
        profile: Profile,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        post: String,
        /// Group value, e.g. Expert or NonUS; the checkpoint's category is used.
        #[arg(long)]
        group: Option<String>,
        /// Whitespace-separated asker vector for social_embedding models.
        #[arg(long)]
        asker_vector: Option<String>,
    },
    AttentionRatio {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        post: String,
        #[arg(long)]
        category: Option<GroupCategory>,
    },
    /// Synthetic corpus where the group selects the question template.
    Synth {
        #[arg(long, default_value_t = 400)]
        posts: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    Toy,
    Paper,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    Run {
        /// `name=checkpoint_dir`, repeatable.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        #[arg(long)]
        test: PathBuf,
        /// Training examples, for redundancy.
        #[arg(long)]
        train: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "full,divisive@10,group-specific")]
        subsets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum HumanevalCmd {
    Pack {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        text_only: PathBuf,
        #[arg(long)]
        social: PathBuf,
        #[arg(long)]
        category: GroupCategory,
        #[arg(long)]
        subreddit: String,
        #[arg(long, default_value_t = socq_core::humaneval::DEFAULT_POSTS)]
        posts: usize,
        #[arg(long, default_value_t = socq_core::humaneval::DEFAULT_PERCENTILE)]
        percentile: f64,
        #[arg(long, default_value_t = socq_core::humaneval::MAX_QUESTIONS_PER_ANNOTATOR)]
        cap: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Summarize {
        #[arg(long)]
        key: PathBuf,
        /// Completed annotator files; the file stem names the annotator.
        #[arg(long, required = true, num_args = 1..)]
        ratings: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = socq_serve::ENV_CHECKPOINT)]
    pub checkpoint: PathBuf,
    #[arg(long, env = socq_serve::ENV_PORT, default_value_t = socq_serve::DEFAULT_PORT)]
    pub port: u16,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(&a),
        Command::Questions(c) => questions(c),
        Command::Profile(c) => profile(c),
        Command::Embed(c) => embed(c),
        Command::Dataset(c) => dataset(c),
        Command::Groups(c) => groups(c),
        Command::Model(c) => model(c),
        Command::Eval(c) => eval(c),
        Command::Humaneval(c) => humaneval(c),
        Command::Serve(a) => {
            let cfg = socq_serve::ServeConfig {
                checkpoint: a.checkpoint,
                addr: SocketAddr::from((Ipv4Addr::UNSPECIFIED, a.port)),
            };
            tokio::runtime::Runtime::new()
                .context("starting runtime")?
                .block_on(socq_serve::serve(cfg))
        }
    }
}
