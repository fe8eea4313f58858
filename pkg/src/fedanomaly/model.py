"""Bottleneck autoencoder: architecture, public/private split, checkpoints.

The network is a fixed 16-layer chain (8 encoder + 8 decoder). Widths per
network, for input dimensionality d:

    encoder:  d -> 128 -> 64 -> 32 -> 16 -> 8 -> 4 -> 2 -> 2
    decoder:  2 ->   2 ->  4 ->  8 -> 16 -> 32 -> 64 -> 128 -> d

Every layer uses LeakyRelu(0.4) except the encoder bottleneck (encoder layer
8) and the decoder output (decoder layer 8), which are Tanh. Parameters are
one flat float64 vector in nn.py's [W1, b1, ..., W16, b16] layout.

Split learning partitions the 16 layers into a public set (shared with the
aggregator) and a private set (kept on each client): with cuts (ce, cd),
encoder layers 1..ce and decoder layers (8-cd+1)..8 are private.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, PartitionError, ShapeError
from .nn import (
    LayerSpec,
    LeakyRelu,
    Tanh,
    forward_all_rowstable,
    init_network,
    layers_from_vector,
    network_size,
    param_slices,
)

N_ENCODER_LAYERS = 8
N_DECODER_LAYERS = 8
N_LAYERS = N_ENCODER_LAYERS + N_DECODER_LAYERS

# output widths of the 8 encoder layers; the decoder mirrors them back out
ENCODER_OUT_WIDTHS = (128, 64, 32, 16, 8, 4, 2, 2)
LATENT_DIM = 2


def autoencoder_specs(input_dim: int) -> tuple[LayerSpec, ...]:
    """LayerSpecs for the full 16-layer chain."""
    if not isinstance(input_dim, (int, np.integer)) or input_dim < 2:
        raise ConfigError(f"input_dim must be an integer >= 2, got {input_dim!r}")
    input_dim = int(input_dim)
    enc_in = (input_dim,) + ENCODER_OUT_WIDTHS[:-1]
    dec_out = tuple(reversed(ENCODER_OUT_WIDTHS[:-1])) + (input_dim,)
    dec_in = (LATENT_DIM,) + dec_out[:-1]
    specs = []
    for i, (din, dout) in enumerate(zip(enc_in, ENCODER_OUT_WIDTHS)):
        act = Tanh() if i == N_ENCODER_LAYERS - 1 else LeakyRelu(0.4)
        specs.append(LayerSpec(din, dout, act))
    for i, (din, dout) in enumerate(zip(dec_in, dec_out)):
        act = Tanh() if i == N_DECODER_LAYERS - 1 else LeakyRelu(0.4)
        specs.append(LayerSpec(din, dout, act))
    return tuple(specs)


def n_autoencoder_params(input_dim: int) -> int:
    return network_size(autoencoder_specs(input_dim))


def build_autoencoder(input_dim: int, seed) -> np.ndarray:
    """Seeded flat parameter vector for the full chain.

    `seed` may be an int, a sequence of ints, or a ready Generator.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return init_network(autoencoder_specs(input_dim), rng)


# --------------------------------------------------------------------------
# split learning


@dataclass(frozen=True)
class SplitMask:
    """How many layers stay private at each end of the chain.

    cut_encoder = ce keeps encoder layers 1..ce private; cut_decoder = cd
    keeps decoder layers (8-cd+1)..8 private. (0, 0) makes everything public.
    """

    cut_encoder: int = 0
    cut_decoder: int = 0

    def __post_init__(self):
        for name, value in (("cut_encoder", self.cut_encoder),
                            ("cut_decoder", self.cut_decoder)):
            if not isinstance(value, (int, np.integer)) or not 0 <= value <= 8:
                raise ConfigError(f"{name} must be an integer in [0, 8], got {value!r}")

    def private_layers(self) -> tuple[int, ...]:
        """0-based indices into the 16-layer chain."""
        enc = range(0, self.cut_encoder)
        dec = range(N_ENCODER_LAYERS + N_DECODER_LAYERS - self.cut_decoder, N_LAYERS)
        return tuple(enc) + tuple(dec)

    def public_layers(self) -> tuple[int, ...]:
        private = set(self.private_layers())
        return tuple(i for i in range(N_LAYERS) if i not in private)


def split_indices(input_dim: int, mask: SplitMask) -> tuple[np.ndarray, np.ndarray]:
    """(public, private) index arrays into the flat parameter vector."""
    specs = autoencoder_specs(input_dim)
    slices = param_slices(specs)
    private = set(mask.private_layers())

    def gather(layer_ids):
        parts = [np.arange(slices[i][0].start, slices[i][1].stop) for i in layer_ids]
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.intp)

    pub = gather([i for i in range(N_LAYERS) if i not in private])
    prv = gather(sorted(private))
    return pub, prv


def split_params(
    vector: np.ndarray, input_dim: int, mask: SplitMask
) -> tuple[np.ndarray, np.ndarray]:
    """Partition a flat parameter vector into (public, private) copies."""
    n = n_autoencoder_params(input_dim)
    if vector.shape != (n,):
        raise ShapeError(f"expected parameter vector of shape ({n},), got {vector.shape}")
    pub_idx, prv_idx = split_indices(input_dim, mask)
    return vector[pub_idx].copy(), vector[prv_idx].copy()


def merge_params(
    public: np.ndarray, private: np.ndarray, input_dim: int, mask: SplitMask
) -> np.ndarray:
    """Inverse of split_params; bitwise round trip."""
    pub_idx, prv_idx = split_indices(input_dim, mask)
    if public.shape != pub_idx.shape:
        raise PartitionError(
            f"public subset has shape {public.shape}, mask expects {pub_idx.shape}"
        )
    if private.shape != prv_idx.shape:
        raise PartitionError(
            f"private subset has shape {private.shape}, mask expects {prv_idx.shape}"
        )
    vector = np.empty(n_autoencoder_params(input_dim))
    vector[pub_idx] = public
    vector[prv_idx] = private
    return vector


# --------------------------------------------------------------------------
# scoring


def _resolve_layers(matrix: np.ndarray, params):
    if isinstance(params, np.ndarray):
        specs = autoencoder_specs(matrix.shape[1])
        return layers_from_vector(specs, params)
    return list(params)


def score_dataset(data, params, loss, batch_size: int = 1024) -> np.ndarray:
    """Per-record reconstruction losses, in dataset order.

    `data` is an encoded matrix (or anything with a .matrix); `params` is the
    flat autoencoder vector or an explicit layer list. Results are bitwise
    independent of batch_size: the evaluation kernel reduces each row in a
    fixed order (see nn.matmul_rows).
    """
    matrix = np.asarray(getattr(data, "matrix", data), dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"dataset matrix must be 2-D, got ndim={matrix.ndim}")
    if batch_size < 1:
        raise ShapeError(f"batch_size must be >= 1, got {batch_size}")
    layers = _resolve_layers(matrix, params)
    if matrix.shape[1] != layers[0].in_dim:
        raise ShapeError(
            f"matrix has {matrix.shape[1]} columns, model expects {layers[0].in_dim}"
        )
    out = np.empty(matrix.shape[0])
    for start in range(0, matrix.shape[0], batch_size):
        chunk = matrix[start:start + batch_size]
        recon = forward_all_rowstable(chunk, layers)
        out[start:start + chunk.shape[0]] = loss.per_sample(recon, chunk)
    return out


def latent_codes(data, params, batch_size: int = 1024) -> np.ndarray:
    """Bottleneck activations per record (read-only byproduct; nothing
    downstream consumes these)."""
    matrix = np.asarray(getattr(data, "matrix", data), dtype=np.float64)
    layers = _resolve_layers(matrix, params)
    encoder = layers[:N_ENCODER_LAYERS]
    out = np.empty((matrix.shape[0], LATENT_DIM))
    for start in range(0, matrix.shape[0], batch_size):
        chunk = matrix[start:start + batch_size]
        out[start:start + chunk.shape[0]] = forward_all_rowstable(chunk, encoder)
    return out


# --------------------------------------------------------------------------
# checkpoints

CHECKPOINT_FORMAT_VERSION = 1


def _activation_tag(act) -> dict:
    if isinstance(act, Tanh):
        return {"type": "tanh"}
    return {"type": "leaky_relu", "alpha": act.alpha}


def save_checkpoint(
    base_path: str | Path,
    vector: np.ndarray,
    input_dim: int,
    mask: SplitMask,
    seed: int | None = None,
    config_digest: str | None = None,
) -> tuple[Path, Path]:
    """Write `<base>.json` (manifest) + `<base>.bin` (little-endian float64
    blob of the layer tensors in declaration order). Returns both paths."""
    base = Path(base_path)
    n = n_autoencoder_params(input_dim)
    if vector.shape != (n,):
        raise ShapeError(f"expected parameter vector of shape ({n},), got {vector.shape}")
    specs = autoencoder_specs(input_dim)
    blob_path = base.with_suffix(".bin")
    manifest_path = base.with_suffix(".json")
    blob = np.ascontiguousarray(vector, dtype="<f8").tobytes()
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": "model-checkpoint",
        "input_dim": int(input_dim),
        "n_params": int(n),
        "layers": [
            {"in_dim": s.in_dim, "out_dim": s.out_dim,
             "activation": _activation_tag(s.activation)}
            for s in specs
        ],
        "mask": {"cut_encoder": mask.cut_encoder, "cut_decoder": mask.cut_decoder},
        "seed": seed,
        "config_digest": config_digest,
        "blob": blob_path.name,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    blob_path.write_bytes(blob)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path, blob_path


def load_checkpoint(base_path: str | Path) -> tuple[np.ndarray, int, SplitMask, dict]:
    """Read a checkpoint back; returns (vector, input_dim, mask, manifest)."""
    base = Path(base_path)
    manifest_path = base if base.suffix == ".json" else base.with_suffix(".json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint manifest {manifest_path}: {exc}") from exc
    if manifest.get("kind") != "model-checkpoint":
        raise ConfigError(f"{manifest_path} is not a model checkpoint manifest")
    input_dim = int(manifest["input_dim"])
    blob_path = manifest_path.parent / manifest["blob"]
    raw = blob_path.read_bytes()
    vector = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    n = n_autoencoder_params(input_dim)
    if vector.shape != (n,):
        raise ConfigError(
            f"checkpoint blob holds {vector.shape[0]} values, expected {n}"
        )
    digest = hashlib.sha256(raw).hexdigest()
    if manifest.get("blob_sha256") not in (None, digest):
        raise ConfigError(f"checkpoint blob {blob_path} fails its sha256 check")
    mask = SplitMask(
        cut_encoder=int(manifest["mask"]["cut_encoder"]),
        cut_decoder=int(manifest["mask"]["cut_decoder"]),
    )
    return vector, input_dim, mask, manifest
