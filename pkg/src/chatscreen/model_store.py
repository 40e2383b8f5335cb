"""Versioned binary container for every trained model and for sentence-
vector bundles.

Layout (all integers little-endian):

    bytes 0..7    magic  b"CHSCRNM1"
    bytes 8..11   format version (u32), currently 1
    bytes 12..19  manifest byte length (u64)
    ...           manifest, UTF-8 text
    ...           payload: float32 arrays concatenated in manifest order
    last 4 bytes  CRC-32 of the payload (u32)

The manifest is line-oriented, tab-separated:

    kind<TAB>name                       model kind discriminator
    meta<TAB>key<TAB>value              scalar configuration
    tensor<TAB>name<TAB>rank<TAB>d0,d1<TAB>f32
    strtab<TAB>name<TAB>count           followed by count `s<TAB>string` lines

Files are written atomically (temp file, then rename); loads validate
magic, version, declared sizes against an allocation cap, and the payload
checksum before any tensor is materialized.
"""

from __future__ import annotations

import os
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .author_classifier import ShallowModel
from .errors import (ContainerCorruptionError, ContainerFormatError,
                     ContainerVersionError, UsageError)
from .language_model import LanguageModel
from .lstm import LstmLayerParams
from .preprocessing import Vocabulary
from .scd_classifier import ScdModel

MAGIC = b"CHSCRNM1"
FORMAT_VERSION = 1
DEFAULT_ALLOC_CAP = 4 * 1024 ** 3  # bytes of payload a load may allocate

_HEADER_LEN = len(MAGIC) + 4 + 8
_LAYER_FIELDS = ("Ui", "Uf", "Uo", "Ug", "Wi", "Wf", "Wo", "Wg",
                 "bi", "bf", "bo", "bg")


@dataclass
class Container:
    kind: str
    metas: dict[str, str] = field(default_factory=dict)
    tensors: list[tuple[str, np.ndarray]] = field(default_factory=list)
    strtabs: dict[str, list[str]] = field(default_factory=dict)

    def tensor(self, name: str) -> np.ndarray:
        for n, t in self.tensors:
            if n == name:
                return t
        raise ContainerFormatError(f"container is missing tensor {name!r}")


def _manifest_text(container: Container) -> str:
    lines = [f"kind\t{container.kind}"]
    for key, value in container.metas.items():
        lines.append(f"meta\t{key}\t{value}")
    for name, table in container.strtabs.items():
        lines.append(f"strtab\t{name}\t{len(table)}")
        for s in table:
            if "\t" in s or "\n" in s:
                raise UsageError(f"string table entry contains tab/newline: "
                                 f"{s!r}")
            lines.append(f"s\t{s}")
    for name, tensor in container.tensors:
        dims = ",".join(str(d) for d in tensor.shape)
        lines.append(f"tensor\t{name}\t{tensor.ndim}\t{dims}\tf32")
    return "\n".join(lines) + "\n"


def write_container(container: Container, path) -> int:
    """Write atomically; returns the byte count."""
    for name, tensor in container.tensors:
        if tensor.dtype != np.float32:
            raise UsageError(f"tensor {name!r} must be float32, got "
                             f"{tensor.dtype}")
    manifest = _manifest_text(container).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(t).astype("<f4").tobytes()
                       for _, t in container.tensors)
    blob = (MAGIC + FORMAT_VERSION.to_bytes(4, "little")
            + len(manifest).to_bytes(8, "little") + manifest + payload
            + zlib.crc32(payload).to_bytes(4, "little"))
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(blob)


def _parse_manifest(text: str):
    try:
        return _parse_manifest_lines(text)
    except ValueError as exc:
        raise ContainerFormatError(f"bad manifest field: {exc}") from exc


def _parse_manifest_lines(text: str):
    kind = None
    metas: dict[str, str] = {}
    strtabs: dict[str, list[str]] = {}
    specs: list[tuple[str, tuple[int, ...]]] = []
    pending: list[str] | None = None
    pending_left = 0
    for line in text.splitlines():
        if pending_left:
            if not line.startswith("s\t"):
                raise ContainerFormatError("string table truncated in manifest")
            pending.append(line[2:])
            pending_left -= 1
            continue
        fields = line.split("\t")
        tag = fields[0]
        if tag == "kind" and len(fields) == 2:
            kind = fields[1]
        elif tag == "meta" and len(fields) == 3:
            metas[fields[1]] = fields[2]
        elif tag == "strtab" and len(fields) == 3:
            pending = []
            strtabs[fields[1]] = pending
            pending_left = int(fields[2])
        elif tag == "tensor" and len(fields) == 5:
            name, rank, dims, dtype = fields[1], int(fields[2]), fields[3], fields[4]
            if dtype != "f32":
                raise ContainerFormatError(f"unsupported element type {dtype!r}")
            shape = tuple(int(d) for d in dims.split(",")) if dims else ()
            if len(shape) != rank:
                raise ContainerFormatError(f"tensor {name!r}: rank {rank} does "
                                           f"not match dims {dims!r}")
            specs.append((name, shape))
        elif tag == "":
            continue
        else:
            raise ContainerFormatError(f"unrecognized manifest line: {line!r}")
    if pending_left:
        raise ContainerFormatError("string table truncated in manifest")
    if kind is None:
        raise ContainerFormatError("manifest does not declare a model kind")
    return kind, metas, strtabs, specs


def read_container(path, alloc_cap: int = DEFAULT_ALLOC_CAP) -> Container:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER_LEN)
        if len(head) < _HEADER_LEN or head[:8] != MAGIC:
            raise ContainerFormatError(f"{path}: not a model container "
                                       "(bad magic)")
        version = int.from_bytes(head[8:12], "little")
        if version > FORMAT_VERSION:
            raise ContainerVersionError(
                f"{path}: file format version {version} is newer than "
                f"supported version {FORMAT_VERSION}")
        manifest_len = int.from_bytes(head[12:20], "little")
        if manifest_len > alloc_cap:
            raise ContainerCorruptionError(f"{path}: declared manifest length "
                                           f"{manifest_len} exceeds cap")
        manifest_raw = fh.read(manifest_len)
        if len(manifest_raw) < manifest_len:
            raise ContainerCorruptionError(f"{path}: truncated manifest")
        kind, metas, strtabs, specs = _parse_manifest(
            manifest_raw.decode("utf-8"))
        payload_len = 0
        for _, shape in specs:
            n = 1
            for d in shape:
                if d < 0:
                    raise ContainerCorruptionError(f"{path}: negative dimension")
                n *= d
            payload_len += 4 * n
        if payload_len > alloc_cap:
            raise ContainerCorruptionError(f"{path}: declared payload "
                                           f"{payload_len} bytes exceeds cap "
                                           f"{alloc_cap}")
        payload = fh.read(payload_len)
        if len(payload) < payload_len:
            raise ContainerCorruptionError(f"{path}: truncated payload")
        crc_raw = fh.read(4)
        if len(crc_raw) < 4:
            raise ContainerCorruptionError(f"{path}: missing checksum")
        if fh.read(1):
            raise ContainerCorruptionError(f"{path}: trailing bytes after "
                                           "checksum")
    if zlib.crc32(payload) != int.from_bytes(crc_raw, "little"):
        raise ContainerCorruptionError(f"{path}: payload checksum mismatch")
    tensors = []
    offset = 0
    for name, shape in specs:
        count = 1
        for d in shape:
            count *= d
        arr = np.frombuffer(payload, dtype="<f4", count=count,
                            offset=offset).reshape(shape).copy()
        tensors.append((name, arr))
        offset += 4 * count
    return Container(kind=kind, metas=metas, tensors=tensors, strtabs=strtabs)


def _layer_tensors(prefix: str, layer: LstmLayerParams):
    return [(f"{prefix}.{name}", getattr(layer, name))
            for name in layer.param_names()]


def _layer_from(container: Container, prefix: str) -> LstmLayerParams:
    present = {n for n, _ in container.tensors}
    kwargs = {}
    for name in _LAYER_FIELDS:
        full = f"{prefix}.{name}"
        if full in present:
            kwargs[name] = container.tensor(full)
    return LstmLayerParams(**kwargs)


def _vocab_entries(vocab: Vocabulary) -> list[str]:
    return list(vocab.tokens)


@dataclass
class VectorBundle:
    """Sentence-vector matrices per conversation, the vectorize stage's
    artifact."""

    conversation_ids: list[str]
    matrices: list[np.ndarray]   # each (n_messages, hidden_dim) float32


def container_for_model(model) -> Container:
    """Build the serializable view of any supported model object."""
    if isinstance(model, LanguageModel):
        c = Container(kind="language_model")
        c.metas["window"] = str(model.window)
        c.metas["vocab_min_tf"] = str(model.vocab.min_term_frequency)
        c.strtabs["vocab"] = _vocab_entries(model.vocab)
        c.tensors.append(("embedding", model.embedding))
        c.tensors.extend(_layer_tensors("layer1", model.layer1))
        c.tensors.extend(_layer_tensors("layer2", model.layer2))
        c.tensors.append(("out_w", model.out_w))
        c.tensors.append(("out_b", model.out_b))
        return c
    if isinstance(model, ScdModel):
        c = Container(kind="scd_classifier")
        c.metas["masked"] = "1" if model.masked else "0"
        c.tensors.extend(_layer_tensors("layer1", model.layer1))
        c.tensors.extend(_layer_tensors("layer2", model.layer2))
        c.tensors.append(("head_w", model.head_w))
        c.tensors.append(("head_b", model.head_b))
        return c
    if isinstance(model, ShallowModel):
        c = Container(kind="author_classifier")
        c.metas["bigrams"] = "1" if model.bigrams else "0"
        c.strtabs["features"] = list(model.features)
        c.tensors.append(("embedding", model.embedding))
        c.tensors.append(("class_w", model.class_w))
        c.tensors.append(("class_b", model.class_b))
        return c
    if isinstance(model, VectorBundle):
        c = Container(kind="sentence_vectors")
        c.strtabs["conversation_ids"] = list(model.conversation_ids)
        for i, matrix in enumerate(model.matrices):
            c.tensors.append((f"conv{i}", matrix))
        return c
    raise UsageError(f"cannot serialize object of type {type(model).__name__}")


def model_from_container(container: Container):
    kind = container.kind
    if kind == "language_model":
        vocab = Vocabulary(container.strtabs["vocab"],
                           min_term_frequency=int(
                               container.metas["vocab_min_tf"]))
        return LanguageModel(vocab, container.tensor("embedding"),
                             _layer_from(container, "layer1"),
                             _layer_from(container, "layer2"),
                             container.tensor("out_w"),
                             container.tensor("out_b"),
                             window=int(container.metas["window"]))
    if kind == "scd_classifier":
        return ScdModel(_layer_from(container, "layer1"),
                        _layer_from(container, "layer2"),
                        container.tensor("head_w"),
                        container.tensor("head_b"),
                        masked=container.metas.get("masked", "1") == "1")
    if kind == "author_classifier":
        return ShallowModel(container.strtabs["features"],
                            container.tensor("embedding"),
                            container.tensor("class_w"),
                            container.tensor("class_b"),
                            bigrams=container.metas.get("bigrams", "1") == "1")
    if kind == "sentence_vectors":
        ids = container.strtabs["conversation_ids"]
        matrices = [container.tensor(f"conv{i}") for i in range(len(ids))]
        return VectorBundle(ids, matrices)
    raise ContainerFormatError(f"unknown model kind {kind!r}")


def save(model, path) -> int:
    """Serialize any supported model kind; returns bytes written."""
    return write_container(container_for_model(model), path)


def load(path, alloc_cap: int = DEFAULT_ALLOC_CAP):
    """Load whatever model kind the manifest names."""
    return model_from_container(read_container(path, alloc_cap))
