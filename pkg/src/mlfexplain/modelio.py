"""Model files: a JSON manifest next to a little-endian float64 blob.

``model.json`` describes one or more named networks (layer dims,
activations, readout) plus optional extra sections; ``model.bin`` holds
every weight matrix and bias vector in manifest order. The checksum is a
SHA-256 over the canonical manifest (minus the checksum field) followed by
the blob, so edits to either are detected.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumError,
    ModelFormatError,
    TruncatedBlobError,
    VersionMismatchError,
)
from .nn import DenseLayer, LayeredNetwork

FORMAT_NAME = "mlfexplain-model"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


def _canonical(manifest: dict) -> bytes:
    body = {k: v for k, v in manifest.items() if k != "checksum"}
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()


def _checksum(manifest: dict, blob: bytes) -> str:
    h = hashlib.sha256(_canonical(manifest))
    h.update(blob)
    return h.hexdigest()


def _blob_path(path: Path) -> Path:
    return path.with_suffix(".bin")


def save_networks(path, networks: dict[str, LayeredNetwork], extra: dict | None = None):
    path = Path(path)
    chunks = []
    described = []
    for name, net in networks.items():
        layers = []
        for layer in net.layers:
            layers.append(
                {"n_in": layer.n_in, "n_out": layer.n_out, "activation": layer.activation}
            )
            chunks.append(layer.weights.astype(_DTYPE).tobytes(order="C"))
            chunks.append(layer.biases.astype(_DTYPE).tobytes(order="C"))
        described.append({"name": name, "readout": net.readout, "layers": layers})
    blob = b"".join(chunks)
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "blob": _blob_path(path).name,
        "blob_bytes": len(blob),
        "networks": described,
    }
    if extra:
        manifest.update(extra)
    manifest["checksum"] = _checksum(manifest, blob)
    _blob_path(path).write_bytes(blob)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_networks(path) -> tuple[dict[str, LayeredNetwork], dict]:
    """Return ``(networks, manifest)``; raises a ModelFormatError subclass."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"{path} is not a {FORMAT_NAME} manifest")
    if manifest.get("version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"model version {manifest.get('version')!r} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    blob_file = path.parent / manifest.get("blob", _blob_path(path).name)
    try:
        blob = blob_file.read_bytes()
    except OSError as exc:
        raise ModelFormatError(f"cannot read blob {blob_file}: {exc}") from exc

    # structural checks first so a dims/blob mismatch names the layer
    specs = []
    offset = 0
    try:
        for net_desc in manifest["networks"]:
            for k, ld in enumerate(net_desc["layers"]):
                label = f"{net_desc['name']}.layer{k}"
                n_in, n_out = int(ld["n_in"]), int(ld["n_out"])
                if n_in < 1 or n_out < 1:
                    raise ModelFormatError(f"{label} declares empty dims", layer=label)
                need = (n_in * n_out + n_out) * _DTYPE.itemsize
                if offset + need > len(blob):
                    raise TruncatedBlobError(
                        f"{label} declares {n_out}x{n_in} weights but the blob "
                        f"ends after {len(blob)} bytes (needs {offset + need})",
                        layer=label,
                    )
                specs.append((net_desc["name"], label, n_in, n_out, offset, ld["activation"]))
                offset += need
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed manifest: {exc}") from exc
    if offset != len(blob):
        last = specs[-1][1] if specs else None
        raise ModelFormatError(
            f"declared dims cover {offset} bytes but blob has {len(blob)} "
            f"(mismatch after {last})",
            layer=last,
        )
    if manifest.get("checksum") != _checksum(manifest, blob):
        raise ChecksumError(f"checksum mismatch for {path}")

    layers_by_net: dict[str, list[DenseLayer]] = {}
    for name, _, n_in, n_out, off, act in specs:
        w = np.frombuffer(blob, _DTYPE, n_in * n_out, off).reshape(n_out, n_in)
        b = np.frombuffer(blob, _DTYPE, n_out, off + w.nbytes)
        layers_by_net.setdefault(name, []).append(
            DenseLayer(w.astype(np.float64), b.astype(np.float64), act)
        )
    networks = {
        d["name"]: LayeredNetwork(tuple(layers_by_net[d["name"]]), d["readout"])
        for d in manifest["networks"]
    }
    return networks, manifest


def save_model(path, net: LayeredNetwork, extra: dict | None = None):
    return save_networks(path, {"model": net}, extra)


def load_model(path) -> LayeredNetwork:
    networks, _ = load_networks(path)
    if "model" not in networks:
        raise ModelFormatError(f"{path} holds no 'model' network")
    return networks["model"]
