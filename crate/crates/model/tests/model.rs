use candle_core::Tensor;
use socq_core::eval::perplexity;
use socq_core::generation::SequenceScorer;
use socq_core::{GroupCategory, GroupLabel, GroupValue};
use socq_model::input::{collate_sources, prepare_social_embedding_input};
use socq_model::nn::SocialAttention;
use socq_model::synth;
use socq_model::vocab::{group_token, EOS_ID};
use socq_model::{attention_ratio, checkpoint, train, Example, ModelConfig, QuestionModel, Variant, Vocab};

fn label(v: GroupValue) -> GroupLabel {
    GroupLabel::new(GroupCategory::Expertise, v).unwrap()
}

fn tiny(variant: Variant) -> ModelConfig {
    let mut cfg = ModelConfig::toy(variant, GroupCategory::Expertise);
    cfg.model_dim = 32;
    cfg.ff_dim = 64;
    cfg.max_target = 16;
    cfg
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f32 {
    (a - b).unwrap().abs().unwrap().flatten_all().unwrap().max(0).unwrap().to_scalar::<f32>().unwrap()
}

fn values(model: &QuestionModel, name: &str) -> Vec<f32> {
    model.store.var(name).unwrap().as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap()
}

#[test]
fn social_token_adds_nine_tokens_and_one_position() {
    let data = synth::corpus(10, 1);
    let plain_cfg = tiny(Variant::TextOnly);
    let social_cfg = tiny(Variant::SocialToken);
    let plain = QuestionModel::new(&plain_cfg, QuestionModel::build_vocab(&plain_cfg, &data), None).unwrap();
    let social = QuestionModel::new(&social_cfg, QuestionModel::build_vocab(&social_cfg, &data), None).unwrap();
    assert_eq!(social.vocab.len() - plain.vocab.len(), 9);
    for ex in &data {
        let a = plain.prepare(ex).unwrap().source.ids;
        let b = social.prepare(ex).unwrap().source.ids;
        assert_eq!(b.len(), a.len() + 1);
        assert_eq!(social.vocab.token(b[0]), group_token(&ex.group));
        assert_eq!(&b[1..], &a[..]);
    }
    let unlabeled = social.prepare_source("i need advice", None, None).unwrap();
    assert_eq!(social.vocab.token(unlabeled.ids[0]), "{GROUP_EXPERTISE_UNK}");
}

#[test]
fn social_embedding_changes_only_the_final_position() {
    let data = synth::corpus(5, 2);
    let cfg = tiny(Variant::SubredditEmbedding);
    let model = QuestionModel::new(&cfg, QuestionModel::build_vocab(&cfg, &data), None).unwrap();
    let post = &data[0].post_text;
    let n_post = model.vocab.encode(post).len();
    let va: Vec<f32> = (0..100).map(|i| i as f32 / 100.0).collect();
    let vb: Vec<f32> = (0..100).map(|i| -(i as f32) / 50.0).collect();
    let a = model.prepare_source(post, None, Some(&va)).unwrap();
    let b = model.prepare_source(post, None, Some(&vb)).unwrap();
    assert_eq!(a.len(), n_post + 2);
    let dev = model.net.device();
    let ea = model.net.source_embeddings(&collate_sources(&[&a], dev).unwrap()).unwrap();
    let eb = model.net.source_embeddings(&collate_sources(&[&b], dev).unwrap()).unwrap();
    assert_eq!(ea.dims(), &[1, n_post + 2, cfg.model_dim]);
    let diff = (ea - eb).unwrap().abs().unwrap().sum(2).unwrap().squeeze(0).unwrap().to_vec1::<f32>().unwrap();
    assert!(diff[..n_post + 1].iter().all(|d| *d == 0.0));
    assert!(diff[n_post + 1] > 0.0);
    let proj = model.net.projector.as_ref().unwrap();
    assert_eq!(proj.weight().dims(), &[cfg.model_dim, 100]);
    let (ids, _, _) = prepare_social_embedding_input(&model.vocab, &cfg, post, None).unwrap();
    assert_eq!(ids.len(), n_post + 2);
}

/// Copies every plain attention parameter of layer `layer` into the generic
/// and all group modules of the social model.
fn tie_social_to_plain(plain: &QuestionModel, social: &QuestionModel, layer: usize) {
    let base = format!("encoder.{}.attn", layer - 1);
    for p in ["q", "k", "v", "o"] {
        for t in ["weight", "bias"] {
            let src = plain.store.var(&format!("{base}.{p}.{t}")).unwrap().as_tensor().copy().unwrap();
            social.store.set(&format!("{base}.generic.{p}.{t}"), &src).unwrap();
            for v in GroupCategory::Expertise.values() {
                let prefix = SocialAttention::group_prefix(&base, v);
                social.store.set(&format!("{prefix}.{p}.{t}"), &src).unwrap();
            }
        }
    }
}

#[test]
fn tied_social_attention_reproduces_plain_encoder() {
    let data = synth::corpus(8, 3);
    let plain_cfg = tiny(Variant::TextOnly);
    let mut social_cfg = tiny(Variant::SocialAttention);
    social_cfg.attention_layer = Some(2);
    let vocab = QuestionModel::build_vocab(&plain_cfg, &data);
    let plain = QuestionModel::new(&plain_cfg, vocab.clone(), None).unwrap();
    let social = QuestionModel::new(&social_cfg, vocab, None).unwrap();
    tie_social_to_plain(&plain, &social, 2);
    let pairs_p = plain.prepare_all(&data).unwrap();
    let pairs_s = social.prepare_all(&data).unwrap();
    let dev = plain.net.device();
    let sp: Vec<_> = pairs_p.iter().map(|p| &p.source).collect();
    let ss: Vec<_> = pairs_s.iter().map(|p| &p.source).collect();
    let a = plain.net.encode(&collate_sources(&sp, dev).unwrap()).unwrap().memory;
    let b = social.net.encode(&collate_sources(&ss, dev).unwrap()).unwrap().memory;
    assert!(max_abs_diff(&a, &b) < 1e-5, "{}", max_abs_diff(&a, &b));
}

#[test]
fn group_modules_only_learn_from_their_group() {
    let data: Vec<Example> = synth::corpus(6, 4).into_iter().filter(|e| e.group.value() == GroupValue::Expert).collect();
    let cfg = tiny(Variant::SocialAttention);
    let model = QuestionModel::new(&cfg, QuestionModel::build_vocab(&cfg, &data), Some(1)).unwrap();
    let names: Vec<String> = model.store.names().map(String::from).collect();
    let group_params = |v: GroupValue| -> Vec<String> {
        let prefix = SocialAttention::group_prefix("encoder.0.attn", v);
        names.iter().filter(|n| n.starts_with(&format!("{prefix}."))).cloned().collect()
    };
    let before: Vec<(String, Vec<f32>)> = names.iter().map(|n| (n.clone(), values(&model, n))).collect();
    let pairs = model.prepare_all(&data).unwrap();
    let mut opt = model.optimizer().unwrap();
    model.step(&mut opt, &pairs.iter().collect::<Vec<_>>()).unwrap();
    let changed = |n: &str| before.iter().find(|(k, _)| k == n).unwrap().1 != values(&model, n);
    assert!(group_params(GroupValue::Expert).iter().any(|n| changed(n)));
    for v in [GroupValue::Novice, GroupValue::UNK] {
        let ps = group_params(v);
        assert_eq!(ps.len(), 8);
        assert!(ps.iter().all(|n| !changed(n)), "{v} module moved");
    }
}

#[test]
fn memorizes_twenty_pairs() {
    let data = synth::corpus(10, 5);
    let mut cfg = ModelConfig::toy(Variant::SocialToken, GroupCategory::Expertise);
    cfg.max_target = 16;
    let model = QuestionModel::new(&cfg, QuestionModel::build_vocab(&cfg, &data), None).unwrap();
    let pairs = model.prepare_all(&data).unwrap();
    let mut opt = model.optimizer().unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        last = model.run_epoch(&mut opt, &pairs, &mut rng).unwrap();
        if last < 0.1 {
            break;
        }
    }
    assert!(last < 0.1, "loss {last}");
    let ppl = perplexity(&model, data.iter().map(|e| (e.post_text.as_str(), e.question.as_str(), Some(&e.group)))).unwrap();
    assert!(ppl < 1.15, "perplexity {ppl}");
    for ex in &data[..4] {
        assert_eq!(model.generate_full(&ex.post_text, Some(&ex.group), None).unwrap().text, ex.question);
    }
}

#[test]
fn training_is_deterministic_and_validation_improves() {
    let data = synth::corpus(100, 6);
    let (tr, va, _) = socq_model::split_by_post(&data, 0.2, 0.0, 1);
    let mut cfg = tiny(Variant::TextOnly);
    cfg.epochs = 3;
    let (m1, r1) = train(&cfg, &tr, &va).unwrap();
    let (_, r2) = train(&cfg, &tr, &va).unwrap();
    assert_eq!(r1, r2);
    assert!(r1.best_epoch > 0);
    assert!(r1.valid_loss[r1.best_epoch] < r1.valid_loss[0]);
    assert_eq!(m1.attention_layer, None);
    assert!(train(&cfg, &[], &va).is_err());
    assert!(train(&cfg, &tr, &tr).is_err());
}

#[test]
fn social_attention_layer_is_selected_from_valid_candidates() {
    let data = synth::corpus(20, 7);
    let (tr, va, _) = socq_model::split_by_post(&data, 0.3, 0.0, 1);
    let mut cfg = tiny(Variant::SocialAttention);
    cfg.layers = 3;
    cfg.epochs = 1;
    cfg.attention_layer = None;
    let (model, report) = train(&cfg, &tr, &va).unwrap();
    let tried: Vec<usize> = report.layer_search.iter().map(|(l, _)| *l).collect();
    assert_eq!(tried, vec![1, 3]);
    let best = report.layer_search.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    assert_eq!(model.attention_layer, Some(best));
}

#[test]
fn beam_search_is_deterministic_and_bounded() {
    let data = synth::corpus(10, 8);
    let cfg = tiny(Variant::SocialToken);
    let model = QuestionModel::new(&cfg, QuestionModel::build_vocab(&cfg, &data), None).unwrap();
    let g = label(GroupValue::Novice);
    let a = model.generate_full(&data[0].post_text, Some(&g), None).unwrap();
    let b = model.generate_full(&data[0].post_text, Some(&g), None).unwrap();
    assert_eq!(a, b);
    assert!(a.token_ids.len() < cfg.max_target);
    assert!(!a.token_ids.contains(&EOS_ID));
    let empty = model.generate_full("", Some(&g), None).unwrap();
    assert!(empty.degenerate);
    assert!(!empty.text.is_empty());
}

#[test]
fn uniform_output_layer_gives_vocabulary_perplexity() {
    let data = synth::corpus(10, 9);
    let cfg = tiny(Variant::TextOnly);
    let model = QuestionModel::new(&cfg, QuestionModel::build_vocab(&cfg, &data), None).unwrap();
    let v = model.vocab.len();
    model.store.set("embed.tokens", &Tensor::zeros((v, cfg.model_dim), candle_core::DType::F32, model.net.device()).unwrap()).unwrap();
    let nll = model.token_nlls("a post", "a question ?", None).unwrap();
    assert!(nll.iter().all(|x| (x - (v as f64).ln()).abs() < 1e-5));
    let ppl = perplexity(&model, data.iter().map(|e| (e.post_text.as_str(), e.question.as_str(), None))).unwrap();
    assert!((ppl - v as f64).abs() / (v as f64) < 1e-5);
}

#[test]
fn attention_ratio_is_one_for_tied_group_tokens() {
    let data = synth::corpus(10, 10);
    let cfg = tiny(Variant::SocialToken);
    let model = QuestionModel::new(&cfg, QuestionModel::build_vocab(&cfg, &data), None).unwrap();
    let emb = model.store.var("embed.tokens").unwrap().as_tensor().copy().unwrap();
    let expert = model.vocab.group_id(&label(GroupValue::Expert)).unwrap() as usize;
    let novice = model.vocab.group_id(&label(GroupValue::Novice)).unwrap() as usize;
    let mut rows = emb.to_vec2::<f32>().unwrap();
    rows[novice] = rows[expert].clone();
    let tied = Tensor::new(rows, model.net.device()).unwrap();
    model.store.set("embed.tokens", &tied).unwrap();
    let scores = attention_ratio(&model, &data[0].post_text, GroupCategory::Expertise).unwrap();
    assert_eq!(scores.len(), model.vocab.encode(&data[0].post_text).len());
    for s in &scores {
        assert!(s.score_g1 >= 0.0 && s.score_g2 >= 0.0);
        assert!((s.ratio - 1.0).abs() < 1e-6);
    }
    let total: f64 = scores.iter().map(|s| s.score_g1).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn expert_token_aligned_with_money_words_attends_to_them() {
    let posts = ["my money and cash went to the loan office"];
    let vocab = Vocab::build(&posts, 1, true);
    let mut cfg = tiny(Variant::SocialToken);
    cfg.heads = 1;
    let model = QuestionModel::new(&cfg, vocab, None).unwrap();
    let d = cfg.model_dim;
    let dev = model.net.device();
    let half = d / 2;
    let zeros = |shape: &[usize]| Tensor::zeros(shape, candle_core::DType::F32, dev).unwrap();
    // queries read the first half of the embedding, keys the second half
    let proj = |offset: usize| -> Tensor {
        let rows: Vec<Vec<f32>> = (0..d)
            .map(|o| (0..d).map(|i| if o < half && i == o + offset { 3.0 } else { 0.0 }).collect())
            .collect();
        Tensor::new(rows, dev).unwrap()
    };
    model.store.set("encoder.0.attn.q.weight", &proj(0)).unwrap();
    model.store.set("encoder.0.attn.k.weight", &proj(half)).unwrap();
    for p in ["q", "k"] {
        model.store.set(&format!("encoder.0.attn.{p}.bias"), &zeros(&[d])).unwrap();
    }
    model.store.set("embed.src_pos", &zeros(&[cfg.positions(), d])).unwrap();
    let pattern: Vec<f32> = (0..half).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let embed = |query: f32, key: f32| -> Vec<f32> {
        pattern.iter().map(|p| p * query).chain(pattern.iter().map(|p| p * key)).collect()
    };
    let mut rows = vec![embed(0.0, -1.0); model.vocab.len()];
    for w in ["money", "cash", "loan"] {
        rows[model.vocab.id(w) as usize] = embed(0.0, 1.0);
    }
    rows[model.vocab.group_id(&label(GroupValue::Expert)).unwrap() as usize] = embed(1.0, 0.0);
    rows[model.vocab.group_id(&label(GroupValue::Novice)).unwrap() as usize] = embed(-1.0, 0.0);
    model.store.set("embed.tokens", &Tensor::new(rows, dev).unwrap()).unwrap();
    let scores = attention_ratio(&model, posts[0], GroupCategory::Expertise).unwrap();
    for s in &scores {
        if ["money", "cash", "loan"].contains(&s.token.as_str()) {
            assert!(s.ratio > 1.0, "{s:?}");
        } else {
            assert!(s.ratio < 1.0, "{s:?}");
        }
    }
}

#[test]
fn checkpoint_roundtrip() {
    let data = synth::corpus(10, 11);
    let cfg = tiny(Variant::TextEmbedding);
    let model = QuestionModel::new(&cfg, QuestionModel::build_vocab(&cfg, &data), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    checkpoint::save(&model, None, dir.path()).unwrap();
    let (back, manifest) = checkpoint::load(dir.path()).unwrap();
    assert_eq!(manifest.config, cfg);
    let v = vec![0.25f32; 100];
    assert_eq!(
        model.generate_full(&data[0].post_text, None, Some(&v)).unwrap(),
        back.generate_full(&data[0].post_text, None, Some(&v)).unwrap()
    );
    let ver = checkpoint::version(dir.path()).unwrap();
    assert_eq!(ver.len(), 12);
    assert_eq!(ver, checkpoint::version(dir.path()).unwrap());
}
