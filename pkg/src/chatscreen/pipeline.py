"""Stage implementations behind the CLI subcommands.

Each stage reads the artifacts earlier stages wrote into the output
directory and writes its own; re-running a stage with unchanged inputs and
seed reproduces its outputs byte for byte. The `pipeline` stage is exactly
the composition of the individual stages.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import author_classifier as ac
from . import corpus_io, model_store, synthgen
from .config import PipelineConfig
from .core_math import Rng
from .errors import UsageError
from .language_model import (LanguageModel, LmTrainConfig, SentenceVector,
                             perplexity, train_lm)
from .metrics import (ConfusionCounts, ReportRow, accuracy, confusion,
                      format_metric, format_report, precision_recall_f)
from .preprocessing import (NormRuleSet, Vocabulary, build_vocabulary,
                            default_rules, encode, load_abbreviations,
                            load_emoticon_patterns, normalize_text, tokenize,
                            vocab_from_lines, vocab_to_lines)
from .scd_classifier import (Chunk, ConversationSequence, ScdTrainConfig,
                             chunk_and_pad, predict_scd, train_scd,
                             vectorize_conversation)

NORMALIZED_XML = "normalized.xml"
FILTER_REPORT = "filter_report.txt"
VOCAB_FILE = "vocab.txt"
LM_MODEL = "lm.model"
LM_LOG = "lm_train.log"
EVAL_LM = "eval_lm.txt"
VECTORS_FILE = "vectors.bin"
SCD_MODEL = "scd.model"
SCD_LOG = "scd_train.log"
SCD_VERDICTS = "scd_verdicts.tsv"
SCD_METRICS = "scd_metrics.txt"
AUTHOR_MODEL = "author.model"
AUTHOR_LOG = "author_train.log"
AUTHOR_SCORES = "author_scores.tsv"
PREDATORS_FILE = "predators.txt"
REPORT_FILE = "report.txt"
SYNTH_CORPUS = "corpus.xml"
SYNTH_TRUTH = "truth.txt"


def _out_dir(cfg: PipelineConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _artifact(cfg: PipelineConfig, name: str, producer: str) -> Path:
    path = Path(cfg.out) / name
    if not path.exists():
        raise UsageError(f"{path} not found; run `chatscreen {producer}` first")
    return path


def _stage_rng(cfg: PipelineConfig, stage: str) -> Rng:
    return Rng(cfg.seed).derive(stage)


def _rules(cfg: PipelineConfig) -> NormRuleSet:
    base = default_rules()
    abbr = (load_abbreviations(cfg.abbreviations) if cfg.abbreviations
            else base.abbreviation_map)
    emo = (load_emoticon_patterns(cfg.emoticons) if cfg.emoticons
           else base.emoticon_patterns)
    return NormRuleSet(abbreviation_map=abbr, emoticon_patterns=emo,
                       long_word_limit=cfg.long_word_limit)


def _load_truth(cfg: PipelineConfig) -> set[str]:
    if not cfg.ground_truth:
        raise UsageError("paths.ground_truth is not configured")
    return corpus_io.parse_ground_truth(cfg.ground_truth)


def _load_normalized(cfg: PipelineConfig):
    path = _artifact(cfg, NORMALIZED_XML, "preprocess")
    result = corpus_io.parse_pan_corpus(path)
    truth = _load_truth(cfg)
    labeled = corpus_io.label_conversations(result.conversations, truth)
    return result.conversations, truth, labeled


def run_preprocess(cfg: PipelineConfig) -> None:
    if not cfg.corpus:
        raise UsageError("paths.corpus is not configured")
    out = _out_dir(cfg)
    parsed = corpus_io.parse_pan_corpus(cfg.corpus)
    if parsed.skipped_messages:
        print(f"preprocess: skipped {parsed.skipped_messages} malformed "
              "message(s)")
    truth = _load_truth(cfg)
    rules = _rules(cfg)
    normalized = [
        corpus_io.Conversation(
            conv.id,
            [corpus_io.Message(m.author, m.line_no, m.time,
                               normalize_text(m.text, rules))
             for m in conv.messages])
        for conv in parsed.conversations
    ]
    labeled = corpus_io.label_conversations(normalized, truth)
    filtered, report = corpus_io.filter_corpus(labeled, truth)
    corpus_io.write_pan_corpus([c for c, _ in filtered], out / NORMALIZED_XML)
    (out / FILTER_REPORT).write_text(report.format_table(), encoding="utf-8")
    print(f"preprocess: {report.conversations_before} -> "
          f"{report.conversations_after} conversations -> {out / NORMALIZED_XML}")


def run_build_vocab(cfg: PipelineConfig) -> None:
    out = _out_dir(cfg)
    conversations, _, _ = _load_normalized(cfg)
    documents = [[t for m in conv.messages for t in tokenize(m.text)]
                 for conv in conversations]
    vocab = build_vocabulary(documents, min_tf=cfg.min_tf)
    (out / VOCAB_FILE).write_text(
        "\n".join(vocab_to_lines(vocab)) + "\n", encoding="utf-8")
    print(f"build-vocab: {len(vocab)} tokens -> {out / VOCAB_FILE}")


def _load_vocab(cfg: PipelineConfig) -> Vocabulary:
    path = _artifact(cfg, VOCAB_FILE, "build-vocab")
    return vocab_from_lines(path.read_text(encoding="utf-8").splitlines())


def _lm_documents(conversations, vocab: Vocabulary, window: int):
    """One document per conversation: each message encoded (EOS-terminated,
    truncated to the window) and concatenated in order."""
    docs = []
    for conv in conversations:
        doc: list[int] = []
        for m in conv.messages:
            doc.extend(encode(tokenize(m.text), vocab, window))
        if doc:
            docs.append(doc)
    return docs


def run_train_lm(cfg: PipelineConfig) -> None:
    out = _out_dir(cfg)
    conversations, _, _ = _load_normalized(cfg)
    vocab = _load_vocab(cfg)
    documents = _lm_documents(conversations, vocab, cfg.lm_window)
    model = LanguageModel.create(vocab, cfg.lm_embedding_dim,
                                 cfg.lm_hidden_dim, cfg.lm_window,
                                 _stage_rng(cfg, "lm-init"),
                                 use_bias=cfg.use_bias)
    train_cfg = LmTrainConfig(window=cfg.lm_window, epochs=cfg.lm_epochs,
                              lr=cfg.lm_lr, optimizer=cfg.lm_optimizer,
                              clip_norm=cfg.lm_clip_norm,
                              batch_size=cfg.lm_batch_size)
    lines: list[str] = []
    train_lm(documents, model, train_cfg, _stage_rng(cfg, "lm-train"),
             log_fn=lines.append)
    model_store.save(model, out / LM_MODEL)
    (out / LM_LOG).write_text("".join(f"{l}\n" for l in lines),
                              encoding="utf-8")
    last = lines[-1] if lines else "no epochs"
    print(f"train-lm: {last} -> {out / LM_MODEL}")


def run_eval_lm(cfg: PipelineConfig) -> None:
    out = _out_dir(cfg)
    model = model_store.load(_artifact(cfg, LM_MODEL, "train-lm"))
    conversations, _, _ = _load_normalized(cfg)
    documents = _lm_documents(conversations, model.vocab, model.window)
    ppl = perplexity(model, documents)
    (out / EVAL_LM).write_text(f"perplexity={ppl:.6f}\n", encoding="utf-8")
    print(f"eval-lm: perplexity={ppl:.6f}")


def run_vectorize(cfg: PipelineConfig) -> None:
    out = _out_dir(cfg)
    model = model_store.load(_artifact(cfg, LM_MODEL, "train-lm"))
    conversations, _, _ = _load_normalized(cfg)
    ids: list[str] = []
    matrices = []
    skipped = 0
    for conv in conversations:
        seq = vectorize_conversation(conv, model)
        if seq is None:
            skipped += 1
            continue
        ids.append(conv.id)
        matrices.append(np.stack([v.values for v in seq.vectors])
                        .astype(np.float32))
    bundle = model_store.VectorBundle(ids, matrices)
    model_store.save(bundle, out / VECTORS_FILE)
    note = f", skipped {skipped} empty" if skipped else ""
    print(f"vectorize: {len(ids)} conversations{note} -> {out / VECTORS_FILE}")


def _sequences_from_bundle(bundle, labels_by_id=None):
    sequences = []
    for conv_id, matrix in zip(bundle.conversation_ids, bundle.matrices):
        vectors = [SentenceVector(values=matrix[i], source_len=0)
                   for i in range(matrix.shape[0])]
        label = labels_by_id.get(conv_id) if labels_by_id else None
        sequences.append(ConversationSequence(conv_id, vectors, label))
    return sequences


def _labels_by_id(labeled) -> dict[str, bool]:
    return {conv.id: positive for conv, positive in labeled}


def run_train_scd(cfg: PipelineConfig) -> None:
    out = _out_dir(cfg)
    bundle = model_store.load(_artifact(cfg, VECTORS_FILE, "vectorize"))
    _, _, labeled = _load_normalized(cfg)
    sequences = _sequences_from_bundle(bundle, _labels_by_id(labeled))
    rng = _stage_rng(cfg, "scd-split")
    order = rng.permutation(len(sequences))
    n_val = int(len(sequences) * cfg.scd_val_fraction)
    val_idx = set(int(i) for i in order[:n_val])
    train_chunks: list[Chunk] = []
    val_chunks: list[Chunk] = []
    for i, seq in enumerate(sequences):
        target = val_chunks if i in val_idx else train_chunks
        target.extend(chunk_and_pad(seq, cfg.scd_chunk_len))
    train_cfg = ScdTrainConfig(hidden_dim=cfg.scd_hidden_dim,
                               epochs=cfg.scd_epochs, lr=cfg.scd_lr,
                               optimizer=cfg.scd_optimizer,
                               clip_norm=cfg.scd_clip_norm,
                               batch_size=cfg.scd_batch_size,
                               neg_ratio=cfg.scd_neg_ratio,
                               threshold=cfg.scd_threshold,
                               use_bias=cfg.use_bias, masked=cfg.scd_masked)
    model, records = train_scd(train_chunks, train_cfg,
                               _stage_rng(cfg, "scd-train"),
                               val_chunks=val_chunks or None)
    model_store.save(model, out / SCD_MODEL)
    (out / SCD_LOG).write_text(
        "".join(r.format_line() + "\n" for r in records), encoding="utf-8")
    print(f"train-scd: {len(train_chunks)} train / {len(val_chunks)} val "
          f"chunks -> {out / SCD_MODEL}")


def run_eval_scd(cfg: PipelineConfig) -> None:
    out = _out_dir(cfg)
    model = model_store.load(_artifact(cfg, SCD_MODEL, "train-scd"))
    bundle = model_store.load(_artifact(cfg, VECTORS_FILE, "vectorize"))
    _, _, labeled = _load_normalized(cfg)
    labels = _labels_by_id(labeled)
    sequences = _sequences_from_bundle(bundle, labels)
    rows = []
    tp = fp = tn = fn = 0
    for seq in sequences:
        chunks = chunk_and_pad(seq, cfg.scd_chunk_len)
        pred = predict_scd(model, chunks, cfg.scd_threshold)
        rows.append(f"{seq.conversation_id}\t{pred.max_prob:.6f}\t"
                    f"{'positive' if pred.verdict else 'negative'}")
        truth = bool(seq.label)
        if pred.verdict and truth:
            tp += 1
        elif pred.verdict and not truth:
            fp += 1
        elif not pred.verdict and truth:
            fn += 1
        else:
            tn += 1
    (out / SCD_VERDICTS).write_text("".join(f"{r}\n" for r in rows),
                                    encoding="utf-8")
    counts = ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)
    prf = precision_recall_f(counts, 1.0)
    text = (f"tp={tp} fp={fp} tn={tn} fn={fn}\n"
            f"accuracy={accuracy(counts):.6f}\n"
            f"precision={format_metric(prf.precision)}\n"
            f"recall={format_metric(prf.recall)}\n"
            f"f1={format_metric(prf.f_beta)}\n")
    (out / SCD_METRICS).write_text(text, encoding="utf-8")
    print(f"eval-scd: tp={tp} fp={fp} tn={tn} fn={fn} "
          f"f1={format_metric(prf.f_beta)}")


def _author_classes(labeled, truth) -> dict[str, str]:
    """P for ground-truth predators, V for other participants of positive
    conversations, N for everyone else."""
    positive_participants: set[str] = set()
    all_authors: dict[str, None] = {}
    for conv, positive in labeled:
        for author in conv.authors():
            all_authors.setdefault(author, None)
            if positive:
                positive_participants.add(author)
    classes = {}
    for author in all_authors:
        if author in truth:
            classes[author] = "P"
        elif author in positive_participants:
            classes[author] = "V"
        else:
            classes[author] = "N"
    return classes


def _author_units(labeled, classes=None) -> list[ac.AuthorUnit]:
    units = []
    for conv, _positive in labeled:
        lines_by_author: dict[str, list[list[str]]] = {}
        for m in conv.messages:
            lines_by_author.setdefault(m.author, []).append(tokenize(m.text))
        for author, lines in lines_by_author.items():
            label = classes.get(author) if classes else None
            units.append(ac.AuthorUnit(author=author, conversation_id=conv.id,
                                       lines=lines, label=label))
    return units


def run_train_author(cfg: PipelineConfig) -> None:
    out = _out_dir(cfg)
    _, truth, labeled = _load_normalized(cfg)
    classes = _author_classes(labeled, truth)
    units = _author_units(labeled, classes)
    features = ac.build_feature_vocab(units,
                                      min_freq=cfg.author_min_feature_freq,
                                      bigrams=cfg.author_bigrams)
    if not features:
        raise UsageError("train-author: feature vocabulary is empty; lower "
                         "author.min_feature_freq")
    model = ac.ShallowModel.create(_stage_rng(cfg, "author-init"), features,
                                   cfg.author_k, bigrams=cfg.author_bigrams)
    train_cfg = ac.AuthorTrainConfig(k=cfg.author_k, epochs=cfg.author_epochs,
                                     lr=cfg.author_lr,
                                     optimizer=cfg.author_optimizer,
                                     clip_norm=cfg.author_clip_norm,
                                     batch_size=cfg.author_batch_size,
                                     min_feature_freq=cfg.author_min_feature_freq,
                                     bigrams=cfg.author_bigrams,
                                     balance=cfg.author_balance)
    _, records = ac.train_author(model, units, train_cfg,
                                 _stage_rng(cfg, "author-train"))
    model_store.save(model, out / AUTHOR_MODEL)
    (out / AUTHOR_LOG).write_text(
        "".join(r.format_line() + "\n" for r in records), encoding="utf-8")
    print(f"train-author: {len(units)} units, {len(features)} features -> "
          f"{out / AUTHOR_MODEL}")


def run_score_authors(cfg: PipelineConfig) -> None:
    out = _out_dir(cfg)
    model = model_store.load(_artifact(cfg, AUTHOR_MODEL, "train-author"))
    _, _, labeled = _load_normalized(cfg)
    units = _author_units(labeled)
    per_author: dict[str, list[ac.SentimentScore]] = {}
    for unit in units:
        feats = ac.featurize(model, unit.lines)
        per_author.setdefault(unit.author, []).append(ac.score(model, feats))
    rows = []
    for author in sorted(per_author):
        avg = ac.average_author_scores(per_author[author])
        verdict = ac.AuthorVerdict(author, avg)
        rows.append(f"{author}\t{avg.p!r}\t{avg.v!r}\t{avg.n!r}\t"
                    f"{verdict.predicted_class}")
    (out / AUTHOR_SCORES).write_text("".join(f"{r}\n" for r in rows),
                                     encoding="utf-8")
    print(f"score-authors: {len(rows)} authors -> {out / AUTHOR_SCORES}")


def read_author_scores(path) -> dict[str, ac.AuthorVerdict]:
    verdicts = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        author, p, v, n, _cls = line.split("\t")
        score = ac.SentimentScore(p=float(p), v=float(v), n=float(n))
        verdicts[author] = ac.AuthorVerdict(author, score)
    return verdicts


def read_scd_verdicts(path) -> dict[str, tuple[float, bool]]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        conv_id, prob, verdict = line.split("\t")
        out[conv_id] = (float(prob), verdict == "positive")
    return out


def run_identify(cfg: PipelineConfig) -> None:
    out = _out_dir(cfg)
    verdict_rows = read_scd_verdicts(_artifact(cfg, SCD_VERDICTS, "eval-scd"))
    verdicts = read_author_scores(_artifact(cfg, AUTHOR_SCORES,
                                            "score-authors"))
    conversations, truth, _ = _load_normalized(cfg)
    suspicious = [cid for cid, (_p, positive) in verdict_rows.items()
                  if positive]
    result = ac.identify_predators(suspicious, verdicts, conversations)
    for anomaly in result.anomalies:
        print(f"identify: {anomaly}")
    corpus_io.write_ground_truth(result.flagged, out / PREDATORS_FILE)
    universe = {a for conv in conversations for a in conv.authors()} | truth
    counts = confusion(result.flagged, truth, universe)
    report = "Predator identification vs ground truth\n"
    report += format_report([ReportRow("chatscreen", counts)])
    report += f"accuracy={accuracy(counts):.6f}\n"
    (out / REPORT_FILE).write_text(report, encoding="utf-8")
    prf = precision_recall_f(counts, 0.5)
    print(f"identify: flagged {len(result.flagged)} predators, "
          f"P={format_metric(prf.precision)} R={format_metric(prf.recall)} "
          f"F0.5={format_metric(prf.f_beta)} -> {out / PREDATORS_FILE}")


def run_pipeline(cfg: PipelineConfig) -> None:
    run_preprocess(cfg)
    run_build_vocab(cfg)
    run_train_lm(cfg)
    run_eval_lm(cfg)
    run_vectorize(cfg)
    run_train_scd(cfg)
    run_eval_scd(cfg)
    run_train_author(cfg)
    run_score_authors(cfg)
    run_identify(cfg)


def run_synth(cfg: PipelineConfig) -> None:
    out = _out_dir(cfg)
    spec = synthgen.SynthSpec(seed=Rng(cfg.seed).derive("synth").seed,
                              n_conversations=cfg.synth_n_conversations,
                              predator_fraction=cfg.synth_predator_fraction,
                              geometric_p=cfg.synth_geometric_p,
                              marker_density=cfg.synth_marker_density)
    result = synthgen.generate(spec)
    (out / SYNTH_CORPUS).write_bytes(result.xml_bytes)
    corpus_io.write_ground_truth(result.predator_ids, out / SYNTH_TRUTH)
    print(f"synth: {cfg.synth_n_conversations} conversations, "
          f"{len(result.predator_ids)} predators -> {out / SYNTH_CORPUS}")
