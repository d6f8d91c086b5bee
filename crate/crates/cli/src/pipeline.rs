use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use socq_core::analysis::{encode_pair, group_diff_report, CategoryLexicon, ClassifierConfig, GroupClassifier, Pca};
use socq_core::embeddings::{
    asker_subreddit_embedding, asker_text_embedding, read_embeddings, write_embeddings, CrosspostMatrix,
    TextEmbedder, TextEmbedderConfig, TruncatedSvd,
};
use socq_core::eval::{build_pairs, evaluate_run, mark_divisive, write_csv, EvalExample, ModelUnderTest, Subset};
use socq_core::humaneval::{
    build_packets, export_packets, krippendorff_alpha, rating_matrix, read_key, read_ratings, sample_divisive_posts,
    summarize, Level, PacketPost,
};
use socq_core::ingest::{
    filter_comments, filter_posts, open_archive, parse_archive, read_jsonl, write_jsonl, BotList, Comment, Post,
    RawRecord, Schema,
};
use socq_core::ports::{read_key_values, AsciiRatioDetector, Gazetteer, GazetteerNer, HashEncoder, HeuristicParser, SentenceEncoder};
use socq_core::profile::{label_profile, load_allowlist, related_subreddits, AskerProfile, HistoryEntry, LocationResolver, ThresholdSet};
use socq_core::questions::{cross_validate, extract_candidates, load_annotations, score_and_filter, ForestConfig, InfoSeekClassifier, Question, StopWords};
use socq_core::{GroupCategory, GroupLabel, GroupValue};
use socq_model::{checkpoint, synth, Example, ModelConfig, QuestionModel};

use crate::{DatasetCmd, EmbedCmd, EvalCmd, GroupsCmd, HumanevalCmd, IngestArgs, ModelCmd, Profile, ProfileCmd, QuestionsCmd, RelatedArgs};

/// One comment of an asker's history, as stored in history files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub asker_id: String,
    #[serde(flatten)]
    pub entry: HistoryEntry,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    write_jsonl(&mut w, items)?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?)
}

fn parse_all(paths: &[std::path::PathBuf], schema: &Schema) -> Result<(Vec<RawRecord>, usize)> {
    let mut records = Vec::new();
    let mut malformed = 0;
    for p in paths {
        let out = parse_archive(open_archive(p)?, schema).with_context(|| format!("reading {}", p.display()))?;
        malformed += out.malformed;
        records.extend(out.records);
    }
    Ok((records, malformed))
}

#[derive(Debug, Serialize)]
struct IngestStats {
    posts: usize,
    comments: usize,
    malformed_posts: usize,
    malformed_comments: usize,
    rejected_posts: socq_core::ingest::RejectionTally,
    bot_comments: usize,
    orphaned_comments: usize,
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let bots = match &a.bots {
        Some(p) => BotList::load(p)?,
        None => BotList::default(),
    };
    let (post_records, malformed_posts) = parse_all(&a.posts, &Schema::submissions())?;
    let (comment_records, malformed_comments) = parse_all(&a.comments, &Schema::comments())?;
    let posts = filter_posts(&post_records, &bots, a.min_words, &AsciiRatioDetector::default());
    let comments = filter_comments(&comment_records, &posts.posts, &bots);
    write_lines(&a.out.join("posts.jsonl"), &posts.posts)?;
    write_lines(&a.out.join("comments.jsonl"), &comments.comments)?;
    let stats = IngestStats {
        posts: posts.posts.len(),
        comments: comments.comments.len(),
        malformed_posts,
        malformed_comments,
        rejected_posts: posts.rejected,
        bot_comments: comments.bot_rejected,
        orphaned_comments: comments.orphaned,
    };
    write_json(&a.out.join("ingest_stats.json"), &stats)?;
    log::info!("kept {} posts and {} comments", stats.posts, stats.comments);
    Ok(())
}

pub fn questions(cmd: QuestionsCmd) -> Result<()> {
    match cmd {
        QuestionsCmd::Extract { comments, out } => {
            let comments: Vec<Comment> = read_jsonl(&comments)?;
            let qs: Vec<Question> = comments.iter().flat_map(extract_candidates).collect();
            log::info!("{} candidate questions from {} comments", qs.len(), comments.len());
            write_lines(&out, &qs)
        }
        QuestionsCmd::TrainFilter { annotations, stopwords, folds, seed, out } => {
            let rows = load_annotations(&annotations)?;
            let stop = match stopwords {
                Some(p) => StopWords::load(&p)?,
                None => StopWords::default(),
            };
            let cfg = ForestConfig { seed, ..ForestConfig::default() };
            let report = cross_validate(&rows, folds, &stop, &cfg, seed)?;
            println!("{folds}-fold mean F1 {:.4}", report.mean_f1);
            let clf = InfoSeekClassifier::train(&rows, &stop, &cfg)?;
            write_json(&out, &clf)?;
            write_json(&out.with_extension("cv.json"), &report)
        }
        QuestionsCmd::Filter { classifier, candidates, threshold, out } => {
            let clf: InfoSeekClassifier = read_json(&classifier)?;
            let qs: Vec<Question> = read_jsonl(&candidates)?;
            let n = qs.len();
            let kept = score_and_filter(qs, |t| clf.probability(t), threshold);
            log::info!("kept {} of {n} questions at threshold {threshold}", kept.len());
            write_lines(&out, &kept)
        }
    }
}

/// Groups history records into one profile per asker, ordered by asker id.
pub fn load_profiles(history: &Path) -> Result<Vec<AskerProfile>> {
    let records: Vec<HistoryRecord> = read_jsonl(history)?;
    let mut by_asker: BTreeMap<String, Vec<HistoryEntry>> = BTreeMap::new();
    for r in records {
        by_asker.entry(r.asker_id).or_default().push(r.entry);
    }
    Ok(by_asker.into_iter().map(|(id, h)| AskerProfile::new(id, h)).collect())
}

fn resolve_related(a: &RelatedArgs) -> Result<HashSet<String>> {
    if let Some(p) = &a.related {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        return Ok(text.lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty()).collect());
    }
    match (&a.allowlist, &a.subreddit_embeddings) {
        (Some(allow), Some(emb)) => Ok(related_subreddits(&a.target, &read_embeddings(emb)?, a.related_k, &load_allowlist(allow)?)),
        _ => {
            log::warn!("no related subreddits given; expertise counts the target only");
            Ok(HashSet::new())
        }
    }
}

pub fn profile(cmd: ProfileCmd) -> Result<()> {
    match cmd {
        ProfileCmd::Thresholds { history, related, out } => {
            let profiles = load_profiles(&history)?;
            let rel = resolve_related(&related)?;
            let t = ThresholdSet::compute(&related.target, &profiles, &related.target, &rel)?;
            println!("expertise_p75 {} time_p50 {}", t.expertise_p75, t.time_p50);
            write_json(&out, &t)
        }
        ProfileCmd::Label { history, thresholds, gazetteer, subreddit_geo, min_location_comments, related, out } => {
            let mut profiles = load_profiles(&history)?;
            let rel = resolve_related(&related)?;
            let t: ThresholdSet = read_json(&thresholds)?;
            let gaz = Gazetteer::load(&gazetteer)?;
            let ner = GazetteerNer::new(&gaz);
            let geo: HashMap<String, String> = match subreddit_geo {
                Some(p) => read_key_values(&p)?.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect(),
                None => HashMap::new(),
            };
            let resolver = LocationResolver { ner: &ner, geocoder: &gaz, subreddit_geo: &geo, min_comments: min_location_comments };
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for p in &mut profiles {
                label_profile(p, &t, &related.target, &rel, &resolver);
                for (c, v) in &p.labels {
                    *counts.entry(format!("{c}:{v}")).or_default() += 1;
                }
            }
            for (label, n) in &counts {
                println!("{label}\t{n}");
            }
            write_lines(&out, &profiles)
        }
    }
}

pub fn embed(cmd: EmbedCmd) -> Result<()> {
    match cmd {
        EmbedCmd::Subreddits { history, dim, out } => {
            let profiles = load_profiles(&history)?;
            let m = CrosspostMatrix::build(&profiles);
            let svd = TruncatedSvd::fit(&m.values, dim)?;
            log::info!("{} subreddits, rank {}", m.subreddits.len(), svd.rank());
            let mut w = create(&out)?;
            write_embeddings(&mut w, &svd.row_embeddings(&m.subreddits))?;
            w.flush()?;
            Ok(())
        }
        EmbedCmd::Askers { history, subreddit, text, dim, out } => {
            let profiles = load_profiles(&history)?;
            let vectors: HashMap<String, Vec<f32>> = if text {
                let corpus: Vec<String> = profiles.iter().flat_map(|p| p.history.iter().map(|h| h.body.clone())).collect();
                let model = TextEmbedder::train(&corpus, TextEmbedderConfig { dim, ..TextEmbedderConfig::default() })?;
                profiles.iter().filter_map(|p| Some((p.asker_id.clone(), asker_text_embedding(p, &model)?))).collect()
            } else {
                let subs = read_embeddings(&subreddit.ok_or_else(|| anyhow!("--subreddit or --text is required"))?)?;
                profiles.iter().filter_map(|p| Some((p.asker_id.clone(), asker_subreddit_embedding(p, &subs)?))).collect()
            };
            let missing = profiles.len() - vectors.len();
            if missing > 0 {
                log::warn!("{missing} askers have no embedding");
            }
            let mut w = create(&out)?;
            write_embeddings(&mut w, &vectors)?;
            w.flush()?;
            Ok(())
        }
    }
}

pub fn dataset(cmd: DatasetCmd) -> Result<()> {
    match cmd {
        DatasetCmd::Build { posts, questions, profiles, category, asker_vectors, out } => {
            let posts: Vec<Post> = read_jsonl(&posts)?;
            let posts: HashMap<&str, &Post> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
            let qs: Vec<Question> = read_jsonl(&questions)?;
            let profiles: Vec<AskerProfile> = read_jsonl(&profiles)?;
            let labels: HashMap<&str, GroupLabel> = profiles.iter().map(|p| (p.asker_id.as_str(), p.label(category))).collect();
            let vectors = asker_vectors.map(|p| read_embeddings(&p)).transpose()?.unwrap_or_default();
            let mut examples = Vec::new();
            let mut dropped = 0;
            for q in &qs {
                let Some(post) = posts.get(q.post_id.as_str()) else {
                    dropped += 1;
                    continue;
                };
                examples.push(Example {
                    post_id: q.post_id.clone(),
                    post_text: post.text(),
                    question: q.text.clone(),
                    group: labels.get(q.asker_id.as_str()).copied().unwrap_or(GroupLabel::unk(category)),
                    asker_vec: vectors.get(&q.asker_id).cloned(),
                });
            }
            if dropped > 0 {
                log::warn!("{dropped} questions refer to unknown posts");
            }
            write_lines(&out, &examples)
        }
        DatasetCmd::Split { examples, valid, test, seed, out } => {
            let ex: Vec<Example> = read_jsonl(&examples)?;
            write_splits(&ex, valid, test, seed, &out)
        }
    }
}

fn write_splits(ex: &[Example], valid: f64, test: f64, seed: u64, out: &Path) -> Result<()> {
    let (tr, va, te) = socq_model::split_by_post(ex, valid, test, seed);
    println!("train {} valid {} test {}", tr.len(), va.len(), te.len());
    write_lines(&out.join("train.jsonl"), &tr)?;
    write_lines(&out.join("valid.jsonl"), &va)?;
    write_lines(&out.join("test.jsonl"), &te)
}

/// Splits examples of `category` by the two non-UNK values.
fn by_value(examples: &[Example], category: GroupCategory) -> [(GroupValue, Vec<&str>); 2] {
    category.pair().map(|v| {
        let qs = examples
            .iter()
            .filter(|e| e.group.category() == category && e.group.value() == v)
            .map(|e| e.question.as_str())
            .collect();
        (v, qs)
    })
}

pub fn groups(cmd: GroupsCmd) -> Result<()> {
    match cmd {
        GroupsCmd::Diff { examples, lexicon, category, top_k, out } => {
            let ex: Vec<Example> = read_jsonl(&examples)?;
            let lex = CategoryLexicon::load(&lexicon)?;
            let [(va, qa), (vb, qb)] = by_value(&ex, category);
            let report = group_diff_report((va.as_str(), &qa), (vb.as_str(), &qb), &lex, top_k)?;
            report.write_csv(create(&out)?)?;
            Ok(())
        }
        GroupsCmd::Classify { train, test, pca_dim, out } => {
            let train: Vec<Example> = read_jsonl(&train)?;
            let mut test: Vec<EvalExample> = read_jsonl(&test)?;
            let enc = HashEncoder::default();
            let labeled: Vec<&Example> = train.iter().filter(|e| !e.group.is_unk()).collect();
            let category = labeled.first().map(|e| e.group.category()).ok_or_else(|| anyhow!("no labeled training examples"))?;
            let q_rows = labeled.iter().map(|e| enc.encode(&e.question)).collect::<socq_core::Result<Vec<_>>>()?;
            let p_rows = labeled.iter().map(|e| enc.encode(&e.post_text)).collect::<socq_core::Result<Vec<_>>>()?;
            let (pca_q, pca_p) = (Pca::fit(&q_rows, pca_dim)?, Pca::fit(&p_rows, pca_dim)?);
            let rows = labeled
                .iter()
                .enumerate()
                .map(|(i, e)| Ok((encode_pair(&i.to_string(), &e.question, &e.post_text, &enc, &pca_q, &pca_p)?.concatenated(), e.group.value())))
                .collect::<socq_core::Result<Vec<_>>>()?;
            let clf = GroupClassifier::train(category, &rows, &ClassifierConfig::default())?;
            for (i, e) in test.iter_mut().enumerate() {
                e.group_prob = if e.group.is_unk() {
                    None
                } else {
                    let x = encode_pair(&i.to_string(), &e.question, &e.post_text, &enc, &pca_q, &pca_p)?.concatenated();
                    Some(clf.probability_of(&x, e.group.value()))
                };
            }
            write_lines(&out, &test)
        }
    }
}

fn config_for(variant: socq_model::Variant, category: GroupCategory, config: Option<&Path>, profile: Profile) -> Result<ModelConfig> {
    let mut cfg = match config {
        Some(p) => read_json::<ModelConfig>(p)?,
        None => match profile {
            Profile::Toy => ModelConfig::toy(variant, category),
            Profile::Paper => ModelConfig::paper(variant, category),
        },
    };
    cfg.variant = variant;
    cfg.category = category;
    Ok(cfg)
}

fn load_model(dir: &Path) -> Result<QuestionModel> {
    let (model, _) = checkpoint::load(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
    Ok(model)
}

#[derive(Debug, Serialize)]
struct GenerateOutput {
    question: String,
    degenerate: bool,
    variant: String,
    model_version: String,
}

pub fn model(cmd: ModelCmd) -> Result<()> {
    match cmd {
        ModelCmd::Train { variant, category, train, valid, config, profile, epochs, seed, out } => {
            let mut cfg = config_for(variant, category, config.as_deref(), profile)?;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let train: Vec<Example> = read_jsonl(&train)?;
            let valid: Vec<Example> = read_jsonl(&valid)?;
            let (model, report) = socq_model::train(&cfg, &train, &valid)?;
            checkpoint::save(&model, Some(&report), &out)?;
            println!(
                "best epoch {} valid loss {:.4} attention layer {:?} version {}",
                report.best_epoch,
                report.best_valid_loss(),
                report.attention_layer,
                checkpoint::version(&out)?
            );
            Ok(())
        }
        ModelCmd::Generate { checkpoint: dir, post, group, asker_vector } => {
            let model = load_model(&dir)?;
            let label = group.map(|g| -> Result<GroupLabel> { Ok(GroupLabel::new(model.cfg.category, g.parse()?)?) }).transpose()?;
            let vec = asker_vector
                .map(|s| s.split_whitespace().map(str::parse::<f32>).collect::<std::result::Result<Vec<_>, _>>())
                .transpose()
                .context("parsing --asker-vector")?;
            let g = model.generate_full(&post, label.as_ref(), vec.as_deref())?;
            let out = GenerateOutput {
                question: g.text,
                degenerate: g.degenerate,
                variant: model.cfg.variant.to_string(),
                model_version: checkpoint::version(&dir)?,
            };
            println!("{}", serde_json::to_string(&out)?);
            Ok(())
        }
        ModelCmd::AttentionRatio { checkpoint: dir, post, category } => {
            let model = load_model(&dir)?;
            let category = category.unwrap_or(model.cfg.category);
            let rows = socq_model::attention_ratio(&model, &post, category)?;
            let [g1, g2] = category.pair();
            println!("token\t{g1}\t{g2}\tratio");
            for r in rows {
                println!("{}\t{:.6}\t{:.6}\t{:.6}", r.token, r.score_g1, r.score_g2, r.ratio);
            }
            Ok(())
        }
        ModelCmd::Synth { posts, seed, out } => write_splits(&synth::corpus(posts, seed), 0.1, 0.2, seed, &out),
    }
}

pub fn parse_subsets(specs: &[String]) -> Result<Vec<Subset>> {
    specs.iter().map(|s| Ok(s.parse::<Subset>()?)).collect()
}

pub fn eval(cmd: EvalCmd) -> Result<()> {
    let EvalCmd::Run { models, test, train, subsets, out } = cmd;
    let subsets = parse_subsets(&subsets)?;
    let mut loaded = Vec::new();
    for spec in &models {
        let (name, dir) = spec.split_once('=').ok_or_else(|| anyhow!("--model expects name=dir, got {spec:?}"))?;
        loaded.push((name.to_string(), load_model(Path::new(dir))?));
    }
    let muts: Vec<ModelUnderTest> = loaded
        .iter()
        .map(|(name, m)| ModelUnderTest {
            name: name.clone(),
            generator: m,
            scorer: Some(m),
            conditioned: m.cfg.variant.is_conditioned(),
        })
        .collect();
    let examples: Vec<EvalExample> = read_jsonl(&test)?;
    let train: Vec<Example> = read_jsonl(&train)?;
    let training_questions: HashSet<String> = train.into_iter().map(|e| e.question).collect();
    let rows = evaluate_run(&muts, &examples, &subsets, &training_questions, &HashEncoder::default(), &HeuristicParser)?;
    write_csv(&rows, create(&out.join("metrics.csv"))?)?;
    write_json(&out.join("metrics.json"), &rows)?;
    write_csv(&rows, std::io::stdout())?;
    Ok(())
}

/// Posts of the test split that have a divisive pair at `percentile`, up to
/// `n`, each with its first reference question as ground truth.
pub fn divisive_packet_posts(examples: &[EvalExample], subreddit: &str, n: usize, percentile: f64, seed: u64) -> Result<Vec<PacketPost>> {
    let mut pairs: Vec<_> = build_pairs(examples, &HashEncoder::default())?.into_iter().map(|(_, _, p)| p).collect();
    if mark_divisive(&mut pairs, percentile)?.is_none() {
        bail!("no cross-group question pairs in the test split");
    }
    let chosen = sample_divisive_posts(&pairs, n, seed);
    Ok(chosen
        .into_iter()
        .filter_map(|id| {
            let e = examples.iter().find(|e| e.post_id == id)?;
            Some(PacketPost { post_id: id, subreddit: subreddit.to_string(), post_text: e.post_text.clone(), ground_truth: e.question.clone() })
        })
        .collect())
}

pub fn humaneval(cmd: HumanevalCmd) -> Result<()> {
    match cmd {
        HumanevalCmd::Pack { test, text_only, social, category, subreddit, posts, percentile, cap, seed, out } => {
            let examples: Vec<EvalExample> = read_jsonl(&test)?;
            let chosen = divisive_packet_posts(&examples, &subreddit, posts, percentile, seed)?;
            let (t, s) = (load_model(&text_only)?, load_model(&social)?);
            let packets = build_packets(&chosen, category, &t, &s, seed);
            let files = export_packets(&packets, &out, cap)?;
            println!("{} packets in {} annotator files", packets.len(), files.len());
            Ok(())
        }
        HumanevalCmd::Summarize { key, ratings, out } => {
            let key = read_key(&key)?;
            let mut all = Vec::new();
            for p in &ratings {
                let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("annotator");
                all.extend(read_ratings(p, name)?);
            }
            let summary = summarize(&all, &key)?;
            summary.write_tables(&out)?;
            let mut alphas = BTreeMap::new();
            for (i, dim) in ["answerable", "relevant", "understandable"].into_iter().enumerate() {
                match krippendorff_alpha(&rating_matrix(&all, i), Level::Ordinal) {
                    Ok(a) => {
                        alphas.insert(dim, a);
                    }
                    Err(e) => log::warn!("alpha for {dim}: {e}"),
                }
            }
            write_json(&out.join("agreement.json"), &alphas)?;
            write_json(&out.join("summary.json"), &summary)?;
            for m in &summary.means {
                println!(
                    "{}\t{}\t{}\tn={}\t{:.3}\t{:.3}\t{:.3}",
                    m.category, m.subreddit, m.source, m.n, m.answerable, m.relevant, m.understandable
                );
            }
            Ok(())
        }
    }
}
