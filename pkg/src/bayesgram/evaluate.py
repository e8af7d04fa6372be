"""Benchmark evaluation procedures and the statistics behind them.

Dataset formats: similarity pairs are TSV `word1<TAB>word2<TAB>score`;
entailment pairs are TSV `word1<TAB>word2<TAB>label` with label in {0,1};
lexical-substitution instances are JSON lines with fields target,
target_index, context_tokens, candidates, gold_weights.

Model access goes through a small duck-typed surface: a vocab attribute,
prior_gaussian(word_id), and (for the substitution task) posterior(center,
contexts). Evaluations operate on prior densities except lexical
substitution, which uses the inferred posterior.
"""

import json
from dataclasses import dataclass

import numpy as np

from .gauss import cosine, kl_divergence, log_det_cov

__all__ = ["SimilarityPair", "EntailmentPair", "LexsubInstance",
           "spearman", "pearson", "eval_similarity", "best_f1_threshold",
           "eval_entailment", "eval_directionality",
           "frequency_direction_baseline", "lexsub_rank", "gap",
           "add_mult_baseline", "logdet_frequency_report",
           "load_similarity_pairs", "load_entailment_pairs",
           "load_lexsub_instances"]


class EvalError(Exception):
    """Raised when an evaluation is undefined on the given input."""


@dataclass(frozen=True)
class SimilarityPair:
    word1: str
    word2: str
    gold: float


@dataclass(frozen=True)
class EntailmentPair:
    word1: str
    word2: str
    label: bool


@dataclass(frozen=True)
class LexsubInstance:
    target: str
    target_index: int
    context_tokens: tuple
    candidates: tuple
    gold_weights: dict

    def __post_init__(self):
        if not (0 <= self.target_index < len(self.context_tokens)):
            raise ValueError("target_index out of range")
        if self.context_tokens[self.target_index] != self.target:
            raise ValueError("context_tokens[target_index] must equal target")
        if not any(w > 0 for w in self.gold_weights.values()):
            raise ValueError("at least one gold weight must be positive")


def _ranks(xs):
    """Average ranks (1-based) with tie averaging."""
    xs = np.asarray(xs, dtype=np.float64)
    order = np.argsort(xs, kind="stable")
    ranks = np.empty(len(xs))
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Spearman rank correlation with average-rank tie handling."""
    if len(xs) != len(ys):
        raise ValueError("length mismatch")
    if len(xs) < 2:
        raise ValueError("need at least 2 points")
    if len(set(xs)) == 1 or len(set(ys)) == 1:
        raise EvalError("undefined correlation: constant input")
    return pearson(_ranks(xs), _ranks(ys))


def pearson(xs, ys) -> float:
    if len(xs) != len(ys):
        raise ValueError("length mismatch")
    if len(xs) < 2:
        raise ValueError("need at least 2 points")
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sx = np.sqrt(np.sum(dx * dx))
    sy = np.sqrt(np.sum(dy * dy))
    if sx == 0.0 or sy == 0.0:
        raise EvalError("undefined correlation: constant input")
    return float(np.clip(np.sum(dx * dy) / (sx * sy), -1.0, 1.0))


def eval_similarity(model, pairs):
    """Spearman rho of cosine(prior means) vs gold scores.

    Returns (rho, n_used, n_oov); pairs with either word out of vocabulary
    are skipped and counted.
    """
    vocab = model.vocab
    sys_scores, gold = [], []
    n_oov = 0
    for p in pairs:
        i, j = vocab.lookup(p.word1), vocab.lookup(p.word2)
        if i is None or j is None:
            n_oov += 1
            continue
        sys_scores.append(cosine(model.prior_gaussian(i).mean,
                                 model.prior_gaussian(j).mean))
        gold.append(p.gold)
    if not sys_scores:
        raise EvalError(f"no usable pairs ({n_oov} out of vocabulary)")
    return spearman(sys_scores, gold), len(sys_scores), n_oov


def best_f1_threshold(scores, labels):
    """Best threshold for the rule `score >= threshold -> positive`.

    Sweeps all midpoints between adjacent distinct sorted scores plus
    +/- infinity; ties in F1 resolve to the lowest threshold.
    """
    if len(scores) != len(labels):
        raise ValueError("length mismatch")
    labels = [bool(b) for b in labels]
    if not any(labels):
        raise EvalError("no positive labels")
    distinct = sorted(set(float(s) for s in scores))
    candidates = [-np.inf]
    candidates += [0.5 * (a + b) for a, b in zip(distinct, distinct[1:])]
    candidates.append(np.inf)
    best_t, best_f1 = None, -1.0
    for t in sorted(candidates):
        tp = fp = fn = 0
        for s, y in zip(scores, labels):
            pred = s >= t
            if pred and y:
                tp += 1
            elif pred:
                fp += 1
            elif y:
                fn += 1
        f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        if f1 > best_f1:
            best_t, best_f1 = t, f1
    return best_t, best_f1


def eval_entailment(model, pairs, measure: str = "neg_kl"):
    """Best-threshold F1 of an entailment score over in-vocabulary pairs.

    measure "neg_kl" scores -KL[prior(w1) || prior(w2)]; "cosine" scores
    the cosine of the prior means. Returns (f1, threshold, scores, labels,
    n_oov); the raw score list supports downstream histogram reports.
    """
    if measure not in ("neg_kl", "cosine"):
        raise ValueError(f"unknown measure {measure!r}")
    vocab = model.vocab
    scores, labels = [], []
    n_oov = 0
    for p in pairs:
        i, j = vocab.lookup(p.word1), vocab.lookup(p.word2)
        if i is None or j is None:
            n_oov += 1
            continue
        g1, g2 = model.prior_gaussian(i), model.prior_gaussian(j)
        if measure == "neg_kl":
            scores.append(-kl_divergence(g1, g2))
        else:
            scores.append(cosine(g1.mean, g2.mean))
        labels.append(p.label)
    if not scores:
        raise EvalError(f"no usable pairs ({n_oov} out of vocabulary)")
    threshold, f1 = best_f1_threshold(scores, labels)
    return f1, threshold, scores, labels, n_oov


def eval_directionality(model, pairs):
    """Accuracy of KL-asymmetry direction prediction on entailing pairs.

    Predicts w1 entails w2 iff KL[p(w1)||p(w2)] < KL[p(w2)||p(w1)];
    exact ties predict w1 -> w2. Pairs are assumed gold-labelled as
    (hyponym, hypernym); OOV pairs are skipped.
    """
    vocab = model.vocab
    correct = total = 0
    for p in pairs:
        i, j = vocab.lookup(p.word1), vocab.lookup(p.word2)
        if i is None or j is None:
            continue
        g1, g2 = model.prior_gaussian(i), model.prior_gaussian(j)
        predict_forward = kl_divergence(g1, g2) <= kl_divergence(g2, g1)
        correct += int(predict_forward)
        total += 1
    if total == 0:
        raise EvalError("no usable pairs")
    return correct / total


def frequency_direction_baseline(vocab, pairs):
    """Direction heuristic: the less frequent word entails the more frequent.

    Returns (accuracy, n_used, n_skipped); count ties predict w1 -> w2.
    """
    correct = total = skipped = 0
    for p in pairs:
        i, j = vocab.lookup(p.word1), vocab.lookup(p.word2)
        if i is None or j is None:
            skipped += 1
            continue
        correct += int(vocab.counts[i] <= vocab.counts[j])
        total += 1
    if total == 0:
        raise EvalError("no usable pairs")
    return correct / total, total, skipped


def lexsub_rank(model, inst: LexsubInstance, window: int):
    """Rank substitution candidates by KL from the inferred posterior.

    The posterior conditions on the in-window, in-vocabulary context of the
    target occurrence; candidates sort ascending by KL[q || prior(s)].
    Out-of-vocabulary candidates go last, in input order, with score None.
    """
    vocab = model.vocab
    target_id = vocab.lookup(inst.target)
    if target_id is None:
        raise EvalError(f"target {inst.target!r} out of vocabulary")
    i = inst.target_index
    ctx_tokens = (list(inst.context_tokens[max(0, i - window):i])
                  + list(inst.context_tokens[i + 1:i + 1 + window]))
    ctx_ids = vocab.ids(ctx_tokens)
    if not ctx_ids:
        raise EvalError("no usable context")
    q = model.posterior(target_id, ctx_ids)
    scored, oov = [], []
    for pos, cand in enumerate(inst.candidates):
        cid = vocab.lookup(cand)
        if cid is None:
            oov.append((cand, None))
        else:
            scored.append((pos, cand, kl_divergence(q, model.prior_gaussian(cid))))
    if not scored:
        raise EvalError("all candidates out of vocabulary")
    scored.sort(key=lambda t: (t[2], t[0]))
    return [(cand, score) for _, cand, score in scored] + oov


def gap(ranked_gold_weights, all_gold_weights) -> float:
    """Generalized average precision of a ranking against graded gold weights.

    ranked_gold_weights lists the gold weight of each ranked item in system
    order; all_gold_weights is the full gold weight multiset (including any
    gold items the system never ranked, which count in the denominator).
    """
    gold_sorted = sorted((w for w in all_gold_weights), reverse=True)
    n_pos = sum(1 for w in gold_sorted if w > 0)
    if n_pos == 0:
        raise EvalError("no positive gold weights")
    denom = 0.0
    csum = 0.0
    for j, w in enumerate(gold_sorted[:n_pos], start=1):
        csum += w
        denom += csum / j
    num = 0.0
    csum = 0.0
    for i, w in enumerate(ranked_gold_weights, start=1):
        csum += w
        if w > 0:
            num += csum / i
    return num / denom


def add_mult_baseline(vectors, inst: LexsubInstance, window: int,
                      mode: str = "add"):
    """Cosine-composition ranking baselines over point embeddings.

    vectors maps word -> mean vector. Add averages cosine to the target and
    each context word; Mult takes the geometric mean of shifted cosines
    pcos = (cos + 1) / 2. Returns candidates sorted descending by score,
    OOV candidates last with score None.
    """
    if mode not in ("add", "mult"):
        raise ValueError(f"unknown mode {mode!r}")
    if inst.target not in vectors:
        raise EvalError(f"target {inst.target!r} out of vocabulary")
    t = vectors[inst.target]
    i = inst.target_index
    ctx_tokens = (list(inst.context_tokens[max(0, i - window):i])
                  + list(inst.context_tokens[i + 1:i + 1 + window]))
    ctx_vecs = [vectors[c] for c in ctx_tokens if c in vectors]
    scored, oov = [], []
    for pos, cand in enumerate(inst.candidates):
        if cand not in vectors:
            oov.append((cand, None))
            continue
        s = vectors[cand]
        n = len(ctx_vecs) + 1
        if mode == "add":
            score = (cosine(s, t) + sum(cosine(s, c) for c in ctx_vecs)) / n
        else:
            pc = (cosine(s, t) + 1.0) / 2.0
            for c in ctx_vecs:
                pc *= (cosine(s, c) + 1.0) / 2.0
            score = pc ** (1.0 / n)
        scored.append((pos, cand, score))
    if not scored:
        raise EvalError("all candidates out of vocabulary")
    scored.sort(key=lambda x: (-x[2], x[0]))
    return [(cand, score) for _, cand, score in scored] + oov


def logdet_frequency_report(model, vocab, out=None):
    """Per-word (word, log count, log det cov) rows plus their Pearson r.

    Writes CSV to the `out` stream when given. Returns (rows, r) with
    r = None when the correlation is undefined (constant log-dets).
    """
    rows = []
    for i, w in enumerate(vocab.words):
        rows.append((w, float(np.log(vocab.counts[i])),
                     log_det_cov(model.prior_gaussian(i))))
    try:
        r = pearson([x[1] for x in rows], [x[2] for x in rows])
    except EvalError:
        r = None
    if out is not None:
        out.write("word,log_count,log_det_cov\n")
        for w, lc, ld in rows:
            out.write(f"{w},{lc:.10g},{ld:.10g}\n")
        out.write(f"# pearson_r,{'undefined' if r is None else f'{r:.10g}'}\n")
    return rows, r


def load_similarity_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise EvalError(f"malformed similarity line {lineno}: {line!r}")
            pairs.append(SimilarityPair(parts[0], parts[1], float(parts[2])))
    return pairs


def load_entailment_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[2] not in ("0", "1"):
                raise EvalError(f"malformed entailment line {lineno}: {line!r}")
            pairs.append(EntailmentPair(parts[0], parts[1], parts[2] == "1"))
    return pairs


def load_lexsub_instances(path):
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(LexsubInstance(
                    target=obj["target"],
                    target_index=int(obj["target_index"]),
                    context_tokens=tuple(obj["context_tokens"]),
                    candidates=tuple(obj["candidates"]),
                    gold_weights={k: float(v)
                                  for k, v in obj["gold_weights"].items()}))
            except (KeyError, ValueError, json.JSONDecodeError) as e:
                raise EvalError(f"malformed instance at line {lineno}: {e}")
    return out
