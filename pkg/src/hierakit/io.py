"""Flat binary containers for fields, marginals, sequences, wave functions and potentials.

Layout: ``b"HIERAKIT"``, a little-endian uint64 header length, a UTF-8 JSON
header, then every array as interleaved little-endian float64 ``(re, im)``
pairs in C order. Marginal index order is ``x_1..x_k, x'_1..x'_k``.
Trajectories are directories of per-sample sequence containers plus
``manifest.json``.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .collision import GridProfile, Potential, profile_from_dict
from .errors import InvalidInputError
from .marginals import Marginal, MarginalSequence, Trajectory
from .nbody import WaveFunction
from .spectral import TorusGrid

MAGIC = b"HIERAKIT"
FORMAT_VERSION = 1
_PAIR = np.dtype("<f8")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_plain)


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_container(path, role: str, grid: TorusGrid, arrays, **meta) -> None:
    arrays = [np.ascontiguousarray(a, dtype=complex) for a in arrays]
    header = {"format": FORMAT_VERSION, "role": role, "grid": grid.to_dict(),
              "shapes": [list(a.shape) for a in arrays], "encoding": "complex128 as <f8 (re, im) pairs"}
    header.update(meta)
    blob = _dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for a in arrays:
            pairs = np.empty(a.shape + (2,), dtype=_PAIR)
            pairs[..., 0] = a.real
            pairs[..., 1] = a.imag
            fh.write(pairs.tobytes())


def read_container(path):
    """Return ``(header, grid, arrays)``; raises InvalidInputError on malformed files."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC or len(raw) < 16:
        raise InvalidInputError(f"{path}: not a hierakit container")
    (n,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"{path}: corrupt header ({exc})") from exc
    if header.get("format") != FORMAT_VERSION:
        raise InvalidInputError(f"{path}: unsupported container format {header.get('format')}")
    g = header["grid"]
    grid = TorusGrid(g["d"], g["M"], g["L"])
    offset, arrays = 16 + n, []
    for shape in header["shapes"]:
        count = int(np.prod(shape, dtype=np.int64)) * 2
        end = offset + count * 8
        if end > len(raw):
            raise InvalidInputError(f"{path}: truncated payload")
        pairs = np.frombuffer(raw, dtype=_PAIR, count=count, offset=offset).reshape(tuple(shape) + (2,))
        arrays.append(pairs[..., 0] + 1j * pairs[..., 1])
        offset = end
    if offset != len(raw):
        raise InvalidInputError(f"{path}: trailing bytes after payload")
    return header, grid, arrays


def _expect(header, role, path):
    if header["role"] != role:
        raise InvalidInputError(f"{path}: expected role {role!r}, found {header['role']!r}")


def save_marginal(path, gamma: Marginal, alpha: float = 1.0, xi: float = 0.3) -> None:
    write_container(path, "marginal", gamma.grid, [gamma.data], k=gamma.k, alpha=alpha, xi=xi,
                    index_order="x1..xk,x'1..x'k")


def load_marginal(path) -> Marginal:
    header, grid, (data,) = read_container(path)
    _expect(header, "marginal", path)
    return Marginal(header["k"], grid, data)


def save_sequence(path, Gamma: MarginalSequence) -> None:
    write_container(path, "sequence", Gamma.grid, [g.data for g in Gamma], K=Gamma.K,
                    alpha=Gamma.alpha, xi=Gamma.xi, index_order="x1..xk,x'1..x'k")


def load_sequence(path) -> MarginalSequence:
    header, grid, arrays = read_container(path)
    _expect(header, "sequence", path)
    entries = tuple(Marginal(k, grid, a) for k, a in enumerate(arrays, start=1))
    return MarginalSequence(grid, entries, header["xi"], header["alpha"])


def save_wavefunction(path, phi: WaveFunction) -> None:
    write_container(path, "wavefunction", phi.grid, [phi.data], N=phi.N)


def load_wavefunction(path) -> WaveFunction:
    header, grid, (data,) = read_container(path)
    _expect(header, "wavefunction", path)
    return WaveFunction(header["N"], grid, data)


def save_field(path, grid: TorusGrid, field: np.ndarray, **meta) -> None:
    write_container(path, "field", grid, [field], **meta)


def load_field(path):
    """Return ``(grid, field)``."""
    header, grid, (data,) = read_container(path)
    _expect(header, "field", path)
    return grid, data


def save_potential(path, pot: Potential) -> None:
    meta = {"beta": pot.beta, "N": pot.N, "integral": pot.integral}
    if pot.profile is not None and not isinstance(pot.profile, GridProfile):
        meta["profile"] = pot.profile.to_dict()
    write_container(path, "potential", pot.grid, [pot.values], **meta)


def load_potential(path) -> Potential:
    header, grid, (data,) = read_container(path)
    _expect(header, "potential", path)
    profile = profile_from_dict(header["profile"]) if "profile" in header else None
    return Potential(grid, np.real(data).copy(), header["beta"], header["N"], profile, header["integral"])


def load_profile(path) -> GridProfile:
    """A base profile sampled on a grid, from a ``field`` or ``potential`` container."""
    header, grid, (data,) = read_container(path)
    if header["role"] not in ("field", "potential"):
        raise InvalidInputError(f"{path}: role {header['role']!r} is not a potential profile")
    if np.max(np.abs(np.imag(data))) > 1e-12 * max(1.0, np.max(np.abs(data))):
        raise InvalidInputError(f"{path}: potential profile must be real")
    return GridProfile(grid, np.real(data).copy())


def save_trajectory(directory, traj: Trajectory, problem: dict | None = None,
                    extra: dict | None = None) -> Path:
    """Write ``sample_XXXXX.hkt`` per time sample and a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i in range(traj.times.size):
        name = f"sample_{i:05d}.hkt"
        save_sequence(directory / name, traj.state(i))
        files.append(name)
    manifest = {"format": FORMAT_VERSION, "times": traj.times, "samples": files, "K": traj.K,
                "xi": traj.xi, "alpha": traj.alpha, "grid": traj.grid.to_dict(),
                "problem": problem or {}, "diagnostics": traj.diagnostics}
    if extra:
        manifest.update(extra)
    text = json.dumps(manifest, sort_keys=True, indent=2, default=_plain) + "\n"
    (directory / "manifest.json").write_text(text)
    return directory


def load_trajectory(directory) -> Trajectory:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"{directory}: unreadable manifest ({exc})") from exc
    states = [load_sequence(directory / name) for name in manifest["samples"]]
    return Trajectory.from_states(manifest["times"], states, xi=manifest["xi"], alpha=manifest["alpha"],
                                  diagnostics=manifest.get("diagnostics", {}))


def write_text_files(directory, files: dict) -> list:
    """Write ``name -> text`` pairs; returns the written paths in name order."""
    os.makedirs(directory, exist_ok=True)
    out = []
    for name in sorted(files):
        p = Path(directory) / name
        p.write_text(files[name])
        out.append(p)
    return out
