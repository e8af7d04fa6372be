"""Model bundle serialization plus model inspection (nearest, infer).

Two on-disk formats share one logical schema:

* text: line-oriented with `#SECTION <name>` headers and floats printed at
  17 significant digits, diffable and portable;
* binary: magic `BSG1`, little-endian, length-prefixed sections, exact.

A bundle carries the vocabulary, all parameter arrays of one model kind
(bsg, sg, or w2g), and a snapshot of the training configuration.
"""

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .baselines import SgModel, W2gModel
from .bsg import BsgModel
from .corpus import Vocabulary
from .encoder import EncoderParams
from .gauss import Gaussian, kl_divergence, cosine

__all__ = ["ModelBundle", "SerializationError", "bundle_from_model",
           "model_from_bundle", "save_model", "load_model", "nearest", "infer"]

FORMAT_VERSION = 1
MAGIC = b"BSG1"

REQUIRED_ARRAYS = {
    "bsg": ["prior_mean", "prior_log_var", "ctx_mean", "ctx_log_var",
            "enc_R", "enc_M", "enc_U", "enc_b1", "enc_W", "enc_b2"],
    "sg": ["in_vec", "out_vec"],
    "w2g": ["mean", "log_var"],
}


class SerializationError(Exception):
    pass


@dataclass
class ModelBundle:
    model_kind: str
    cov_kind: str
    dim: int
    vocab: Vocabulary
    arrays: dict
    config: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.model_kind not in REQUIRED_ARRAYS:
            raise SerializationError(f"unknown model_kind {self.model_kind!r}")
        missing = [n for n in REQUIRED_ARRAYS[self.model_kind]
                   if n not in self.arrays]
        if missing:
            raise SerializationError(
                f"missing parameter sections for {self.model_kind}: {missing}")


def bundle_from_model(model, config=None) -> ModelBundle:
    """Wrap a live model (BsgModel, SgModel, or W2gModel) for serialization."""
    cfg = dict(config) if config else {}
    if isinstance(model, BsgModel):
        kind, cov = "bsg", model.cov_kind
    elif isinstance(model, SgModel):
        kind, cov = "sg", "none"
    elif isinstance(model, W2gModel):
        kind, cov = "w2g", model.cov_kind
        cfg.setdefault("energy_kind", model.energy_kind)
        cfg.setdefault("max_mean_norm", model.max_mean_norm)
        cfg.setdefault("var_lo", model.var_lo)
        cfg.setdefault("var_hi", model.var_hi)
    else:
        raise SerializationError(f"unsupported model type {type(model).__name__}")
    return ModelBundle(model_kind=kind, cov_kind=cov, dim=model.dim,
                       vocab=model.vocab, arrays=dict(model.param_arrays()),
                       config=cfg)


def model_from_bundle(bundle: ModelBundle):
    """Reconstruct the live model object from a bundle."""
    a = bundle.arrays
    if bundle.model_kind == "bsg":
        enc = EncoderParams(R=a["enc_R"], M=a["enc_M"], U=a["enc_U"],
                            b1=a["enc_b1"], W=a["enc_W"], b2=a["enc_b2"])
        return BsgModel(vocab=bundle.vocab, cov_kind=bundle.cov_kind,
                        dim=bundle.dim,
                        prior_mean=a["prior_mean"], prior_log_var=a["prior_log_var"],
                        ctx_mean=a["ctx_mean"], ctx_log_var=a["ctx_log_var"],
                        enc=enc)
    if bundle.model_kind == "sg":
        return SgModel(vocab=bundle.vocab, dim=bundle.dim,
                       in_vec=a["in_vec"], out_vec=a["out_vec"])
    cfg = bundle.config
    return W2gModel(vocab=bundle.vocab, cov_kind=bundle.cov_kind, dim=bundle.dim,
                    mean=a["mean"], log_var=a["log_var"],
                    energy_kind=cfg.get("energy_kind", "expected_likelihood"),
                    max_mean_norm=cfg.get("max_mean_norm", 20.0),
                    var_lo=cfg.get("var_lo", 1e-3), var_hi=cfg.get("var_hi", 10.0))


def _header_dict(bundle):
    return {"format_version": bundle.format_version,
            "model_kind": bundle.model_kind,
            "cov_kind": bundle.cov_kind,
            "dim": bundle.dim}


# ---------------------------------------------------------------- text format

def _save_text(bundle, f):
    f.write("#SECTION header\n")
    for k, v in _header_dict(bundle).items():
        f.write(f"{k}\t{v}\n")
    f.write("#SECTION config\n")
    f.write(json.dumps(bundle.config, sort_keys=True) + "\n")
    f.write("#SECTION vocab\n")
    for w, c in zip(bundle.vocab.words, bundle.vocab.counts):
        f.write(f"{w}\t{int(c)}\n")
    for name in sorted(bundle.arrays):
        arr = bundle.arrays[name]
        dims = " ".join(str(s) for s in arr.shape)
        f.write(f"#SECTION array {name} {arr.dtype.name} {arr.ndim} {dims}\n")
        flat = np.asarray(arr, dtype=np.float64).reshape(-1)
        cols = arr.shape[-1] if arr.ndim > 1 else len(flat)
        cols = max(cols, 1)
        for i in range(0, len(flat), cols):
            f.write(" ".join(f"{x:.17g}" for x in flat[i:i + cols]) + "\n")
    f.write("#SECTION end\n")


def _load_text(lines):
    def fail(msg, lineno):
        raise SerializationError(f"line {lineno}: {msg}")

    it = enumerate(lines, 1)
    lineno, line = next(it, (0, None))
    if line is None or line.strip() != "#SECTION header":
        fail("expected '#SECTION header'", lineno)
    header = {}
    config = None
    words, counts = [], []
    arrays = {}
    state = "header"
    pending = None  # (name, dtype, shape, flat list, need)
    saw_end = False
    for lineno, raw in it:
        line = raw.rstrip("\n")
        if line.startswith("#SECTION"):
            if pending is not None:
                name, _, _, flat, need = pending
                if len(flat) != need:
                    fail(f"truncated array section {name!r}: "
                         f"got {len(flat)} of {need} values", lineno)
                pending = _finish_array(arrays, pending)
            parts = line.split()
            if parts[1] == "config":
                state = "config"
            elif parts[1] == "vocab":
                state = "vocab"
            elif parts[1] == "array":
                if len(parts) < 5:
                    fail("malformed array section header", lineno)
                name, dtype, ndim = parts[2], parts[3], int(parts[4])
                shape = tuple(int(x) for x in parts[5:5 + ndim])
                if len(shape) != ndim:
                    fail(f"array section {name!r}: bad shape", lineno)
                pending = (name, dtype, shape, [], int(np.prod(shape)) if shape else 1)
                state = "array"
            elif parts[1] == "end":
                saw_end = True
                state = "done"
            else:
                fail(f"unknown section {parts[1]!r}", lineno)
            continue
        if state == "header":
            k, _, v = line.partition("\t")
            header[k] = v
        elif state == "config":
            config = json.loads(line)
        elif state == "vocab":
            if not line:
                continue
            try:
                w, c = line.split("\t")
                counts.append(int(c))
                words.append(w)
            except ValueError:
                fail(f"malformed vocab line: {line!r}", lineno)
        elif state == "array":
            pending[3].extend(float(x) for x in line.split())
        elif state == "done" and line:
            fail("trailing data after end section", lineno)
    if pending is not None:
        name = pending[0]
        raise SerializationError(f"truncated file: array section {name!r} unfinished")
    if not saw_end:
        raise SerializationError("truncated file: missing end section")
    return _assemble(header, config, words, counts, arrays)


def _finish_array(arrays, pending):
    name, dtype, shape, flat, _ = pending
    arrays[name] = np.array(flat, dtype=np.dtype(dtype)).reshape(shape)
    return None


# -------------------------------------------------------------- binary format

def _save_binary(bundle, f):
    f.write(MAGIC)
    f.write(struct.pack("<I", bundle.format_version))

    def section(name, payload):
        nb = name.encode("utf-8")
        f.write(struct.pack("<I", len(nb)))
        f.write(nb)
        f.write(struct.pack("<Q", len(payload)))
        f.write(payload)

    section("header", json.dumps(_header_dict(bundle), sort_keys=True).encode())
    section("config", json.dumps(bundle.config, sort_keys=True).encode())
    vocab_text = "".join(f"{w}\t{int(c)}\n"
                         for w, c in zip(bundle.vocab.words, bundle.vocab.counts))
    section("vocab", vocab_text.encode("utf-8"))
    for name in sorted(bundle.arrays):
        arr = np.ascontiguousarray(bundle.arrays[name])
        meta = json.dumps({"dtype": arr.dtype.name, "shape": list(arr.shape)},
                          sort_keys=True).encode()
        payload = struct.pack("<I", len(meta)) + meta + arr.astype(
            arr.dtype.newbyteorder("<")).tobytes()
        section("array:" + name, payload)
    section("end", b"")


def _load_binary(f):
    data = f.read()
    if data[:4] != MAGIC:
        raise SerializationError("byte 0: bad magic, not a model file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise SerializationError(
            f"unknown format version {version} (supported: {FORMAT_VERSION})")
    off = 8
    header = config = None
    words, counts = [], []
    arrays = {}
    saw_end = False
    while off < len(data):
        if off + 4 > len(data):
            raise SerializationError(f"byte {off}: truncated section name length")
        (nlen,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        if off + 8 > len(data):
            raise SerializationError(f"byte {off}: truncated section {name!r}")
        (plen,) = struct.unpack_from("<Q", data, off)
        off += 8
        payload = data[off:off + plen]
        if len(payload) != plen:
            raise SerializationError(f"byte {off}: truncated section {name!r}")
        off += plen
        if name == "header":
            header = json.loads(payload)
        elif name == "config":
            config = json.loads(payload)
        elif name == "vocab":
            for line in payload.decode("utf-8").splitlines():
                w, c = line.split("\t")
                words.append(w)
                counts.append(int(c))
        elif name.startswith("array:"):
            (mlen,) = struct.unpack_from("<I", payload, 0)
            meta = json.loads(payload[4:4 + mlen])
            dtype = np.dtype(meta["dtype"]).newbyteorder("<")
            arr = np.frombuffer(payload[4 + mlen:], dtype=dtype)
            expected = int(np.prod(meta["shape"])) if meta["shape"] else 1
            if arr.size != expected:
                raise SerializationError(
                    f"corrupt array section {name[6:]!r}: "
                    f"{arr.size} values, expected {expected}")
            arrays[name[6:]] = arr.reshape(meta["shape"]).astype(meta["dtype"])
        elif name == "end":
            saw_end = True
        else:
            raise SerializationError(f"unknown section {name!r}")
    if not saw_end:
        raise SerializationError("truncated file: missing end section")
    if header is not None:
        header = {k: str(v) for k, v in header.items()}
    return _assemble(header, config, words, counts, arrays)


def _assemble(header, config, words, counts, arrays):
    if header is None or "model_kind" not in header:
        raise SerializationError("truncated file: missing header section")
    version = int(header.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise SerializationError(
            f"unknown format version {version} (supported: {FORMAT_VERSION})")
    if not words:
        raise SerializationError("truncated file: missing vocab section")
    cfg = config or {}
    vocab = Vocabulary(words, np.asarray(counts, dtype=np.int64),
                       subsample_t=cfg.get("subsample_t", 1e-4),
                       neg_table_exponent=cfg.get("neg_exponent", 1.0))
    return ModelBundle(model_kind=header["model_kind"],
                       cov_kind=header["cov_kind"],
                       dim=int(header["dim"]),
                       vocab=vocab, arrays=arrays, config=cfg)


def save_model(bundle: ModelBundle, path, mode: str = "binary"):
    if mode == "text":
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            _save_text(bundle, f)
    elif mode == "binary":
        with open(path, "wb") as f:
            _save_binary(bundle, f)
    else:
        raise ValueError(f"unknown mode {mode!r}")


def load_model(path) -> ModelBundle:
    with open(path, "rb") as f:
        head = f.read(4)
        f.seek(0)
        if head == MAGIC:
            return _load_binary(f)
        text = io.TextIOWrapper(f, encoding="utf-8")
        return _load_text(text)


# ----------------------------------------------------------------- inspection

def _means_table(bundle):
    if bundle.model_kind == "bsg":
        return bundle.arrays["prior_mean"]
    if bundle.model_kind == "sg":
        return bundle.arrays["in_vec"]
    return bundle.arrays["mean"]


def _gaussian(bundle, idx):
    if bundle.model_kind == "bsg":
        return Gaussian(bundle.arrays["prior_mean"][idx],
                        bundle.arrays["prior_log_var"][idx])
    if bundle.model_kind == "w2g":
        return Gaussian(bundle.arrays["mean"][idx], bundle.arrays["log_var"][idx])
    raise SerializationError("model has no density embeddings")


def nearest(bundle: ModelBundle, word: str, k: int, measure: str = "cosine_mean"):
    """Top-k neighbors of `word` by cosine of means or by negated KL.

    Ties order by word id; the query itself is excluded.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if measure not in ("cosine_mean", "neg_kl"):
        raise ValueError(f"unknown measure {measure!r}")
    qid = bundle.vocab.lookup(word)
    if qid is None:
        raise KeyError(f"word {word!r} out of vocabulary")
    scores = []
    if measure == "cosine_mean":
        means = _means_table(bundle)
        qv = means[qid]
        for i in range(len(bundle.vocab)):
            if i != qid:
                scores.append((i, cosine(qv, means[i])))
    else:
        qg = _gaussian(bundle, qid)
        for i in range(len(bundle.vocab)):
            if i != qid:
                scores.append((i, -kl_divergence(qg, _gaussian(bundle, i))))
    scores.sort(key=lambda t: (-t[1], t[0]))
    return [(bundle.vocab.word(i), s) for i, s in scores[:k]]


def infer(bundle: ModelBundle, sentence, target_index: int, window: int) -> Gaussian:
    """Posterior density of the target token in its sentence window."""
    if bundle.model_kind != "bsg":
        raise SerializationError("no encoder: model kind is not bsg")
    model = model_from_bundle(bundle)
    if not (0 <= target_index < len(sentence)):
        raise ValueError("target_index out of range")
    tid = model.vocab.lookup(sentence[target_index])
    if tid is None:
        raise KeyError(f"target {sentence[target_index]!r} out of vocabulary")
    i = target_index
    ctx_tokens = (list(sentence[max(0, i - window):i])
                  + list(sentence[i + 1:i + 1 + window]))
    ctx_ids = model.vocab.ids(ctx_tokens)
    if not ctx_ids:
        raise ValueError("no usable context")
    return model.posterior(tid, ctx_ids)
