"""Single-file offline artifact: an uncompressed ``.npz`` with a JSON manifest.

The manifest (stored as the byte array ``__manifest__``) records the format
version, the study configuration, array shapes/dtypes and a SHA-256 checksum
per array. FE operators are not stored; they are re-assembled from the
configuration, which is deterministic.
"""
from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import StudyConfig, config_from_dict
from .errors import ArtifactError
from .mcrb import McrbRom
from .sgrb import SgrbRom

FORMAT_VERSION = "stochrb-artifact/1"
_MANIFEST = "__manifest__"

_MCRB_SCALARS = ("red_A", "cross", "red_f", "red_l", "AV", "AtV", "f_vec", "l_vec", "gram", "samples", "alpha")
_SGRB_ARRAYS = ("red_A", "cross", "red_f", "red_l", "Lmap")


@dataclass
class OfflineArtifact:
    config: StudyConfig
    samples: np.ndarray
    P_train: np.ndarray
    kl_lambdas: np.ndarray
    kl_pairs: np.ndarray
    mcrb: McrbRom
    sgrb: SgrbRom
    meta: dict

    def arrays(self) -> dict[str, np.ndarray]:
        out = {
            "samples": self.samples,
            "P_train": self.P_train,
            "kl_lambdas": self.kl_lambdas,
            "kl_pairs": self.kl_pairs,
        }
        for i, (B, s) in enumerate(zip(self.mcrb.bases, self.mcrb.singular_values)):
            out[f"mcrb/basis_{i}"] = B
            out[f"mcrb/sv_{i}"] = s
        for name in _MCRB_SCALARS:
            if name != "samples":
                out[f"mcrb/{name}"] = getattr(self.mcrb, name)
        for i, (B, s) in enumerate(zip(self.sgrb.bases, self.sgrb.singular_values)):
            out[f"sgrb/basis_{i}"] = B
            out[f"sgrb/sv_{i}"] = s
        for name in _SGRB_ARRAYS:
            out[f"sgrb/{name}"] = getattr(self.sgrb, name)
        out["sgrb/alpha_bar"] = np.array(self.sgrb.alpha_bar)
        out["sgrb/gamma2"] = np.array(self.sgrb.gamma2)
        return {k: np.require(v, requirements="C") for k, v in out.items()}


def _sha(a: np.ndarray) -> str:
    return hashlib.sha256(np.require(a, requirements="C").tobytes()).hexdigest()


def save_artifact(art: OfflineArtifact, path) -> Path:
    path = Path(path)
    arrays = art.arrays()
    manifest = {
        "version": FORMAT_VERSION,
        "config": art.config.to_dict(),
        "meta": art.meta,
        "n_mcrb_spaces": len(art.mcrb.bases),
        "n_sgrb_spaces": len(art.sgrb.bases),
        "arrays": {k: {"shape": list(v.shape), "dtype": str(v.dtype), "sha256": _sha(v)} for k, v in arrays.items()},
    }
    arrays[_MANIFEST] = np.frombuffer(json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    # write through a buffer so a failed save does not leave a truncated file
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)
    return path


def read_manifest(path) -> dict:
    with np.load(Path(path), allow_pickle=False) as z:
        if _MANIFEST not in z.files:
            raise ArtifactError(f"{path}: no manifest; not a stochrb artifact")
        return json.loads(z[_MANIFEST].tobytes().decode())


def load_artifact(path, verify: bool = True) -> OfflineArtifact:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"artifact not found: {path}")
    try:
        z = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    with z:
        if _MANIFEST not in z.files:
            raise ArtifactError(f"{path}: no manifest; not a stochrb artifact")
        manifest = json.loads(z[_MANIFEST].tobytes().decode())
        if manifest.get("version") != FORMAT_VERSION:
            raise ArtifactError(f"artifact version {manifest.get('version')!r} != supported {FORMAT_VERSION!r}")
        arrays = {k: z[k] for k in manifest["arrays"]}
    if verify:
        for k, info in manifest["arrays"].items():
            if _sha(arrays[k]) != info["sha256"]:
                raise ArtifactError(f"checksum mismatch for array '{k}'")
    cfg = config_from_dict(manifest["config"])
    n_mc, n_sg = manifest["n_mcrb_spaces"], manifest["n_sgrb_spaces"]
    mcrb = McrbRom(
        bases=[arrays[f"mcrb/basis_{i}"] for i in range(n_mc)],
        singular_values=[arrays[f"mcrb/sv_{i}"] for i in range(n_mc)],
        samples=arrays["samples"],
        **{n: arrays[f"mcrb/{n}"] for n in _MCRB_SCALARS if n != "samples"},
    )
    sgrb = SgrbRom(
        bases=[arrays[f"sgrb/basis_{i}"] for i in range(n_sg)],
        singular_values=[arrays[f"sgrb/sv_{i}"] for i in range(n_sg)],
        alpha_bar=float(arrays["sgrb/alpha_bar"].item()),
        gamma2=float(arrays["sgrb/gamma2"].item()),
        **{n: arrays[f"sgrb/{n}"] for n in _SGRB_ARRAYS},
    )
    return OfflineArtifact(
        config=cfg, samples=arrays["samples"], P_train=arrays["P_train"],
        kl_lambdas=arrays["kl_lambdas"], kl_pairs=arrays["kl_pairs"],
        mcrb=mcrb, sgrb=sgrb, meta=manifest.get("meta", {}),
    )
