"""Synthetic surgical-proxy videos with a known, jerk-derived skill score.

Each episode shows a static textured background, a softly deforming "tissue"
ellipse and a few bright tool blobs.  Tools follow quadratic Bezier paths
(zero third difference) plus i.i.d. Gaussian jitter, so the mean squared jerk
of the tracks, and with it the score, is controlled by the jitter level.

On disk an episode is a directory::

    meta.txt    key=value lines (score, user_id, supertrial_id, task_id,
                frame_count, width, height)
    frames.bin  raw uint8 frames, row-major, frame-major
    tools.txt   one line per frame: "t u1 v1 [u2 v2 ...]" in pixels

and a dataset is a set of episode directories plus ``manifest.txt`` listing
them one per line.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

SCORE_MIN, SCORE_MAX = 6.0, 30.0
SCORE_MID = 0.5 * (SCORE_MIN + SCORE_MAX)


@dataclass(frozen=True)
class SynthConfig:
    frame_size: int = 64
    frame_count: int = 128  # holds the default 32 snippets of 4 frames
    tool_count: int = 2
    texture_scale: float = 3.0  # gaussian smoothing of the background noise, px
    background_level: float = 60.0
    background_contrast: float = 18.0
    tissue_radii: tuple[float, float] = (16.0, 11.0)
    tissue_level: float = 135.0
    tissue_deform_max: float = 0.4  # relative radius oscillation, drawn per episode
    tissue_cycles: tuple[float, float] = (4.0, 10.0)  # oscillation periods per episode, drawn uniformly
    tool_sigma: float = 2.5  # blob gaussian width, px
    tool_level: float = 255.0
    path_span: float = 16.0  # typical start-to-end travel of a tool path, px
    margin: float = 8.0
    noise_min: float = 0.5  # per-frame jitter std of the best user, px
    noise_max: float = 2.5  # ... and of the worst user
    trial_spread: float = 0.2  # log-normal spread of jitter across one user's trials
    jerk_mid: float = 150.0  # mean squared jerk that maps to the middle score
    task_id: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.frame_size < 8 or self.frame_count < 4 or self.tool_count < 0:
            raise ValueError("frame_size >= 8, frame_count >= 4, tool_count >= 0 required")
        if self.jerk_mid <= 0:
            raise ValueError("jerk_mid must be positive")
        if not 0 <= self.noise_min <= self.noise_max:
            raise ValueError("need 0 <= noise_min <= noise_max")


@dataclass
class Episode:
    frames: np.ndarray  # (F, H, W) uint8
    score: float
    user_id: int
    supertrial_id: int
    task_id: int
    tool_tracks: np.ndarray  # (F, tool_count, 2) as (u, v) = (column, row)

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]


def mean_squared_jerk(tracks: np.ndarray) -> float:
    """Mean over tools and frames of the squared norm of the third difference."""
    tracks = np.asarray(tracks, dtype=np.float64)
    if tracks.shape[0] < 4 or tracks.shape[1] == 0:
        return 0.0
    jerk = np.diff(tracks, n=3, axis=0)
    return float((jerk**2).sum(axis=-1).mean())


def score_from_jerk(msj: float, jerk_mid: float) -> float:
    """Strictly decreasing affine map: 0 -> 30, jerk_mid -> 18, clamped to [6, 30]."""
    s = SCORE_MAX - (SCORE_MAX - SCORE_MID) * msj / jerk_mid
    return float(min(SCORE_MAX, max(SCORE_MIN, s)))


def score_from_tracks(tracks: np.ndarray, config: SynthConfig) -> float:
    return score_from_jerk(mean_squared_jerk(tracks), config.jerk_mid)


def _tool_tracks(config: SynthConfig, noise: float, rng: np.random.Generator) -> np.ndarray:
    F, n = config.frame_count, config.tool_count
    lo, hi = config.margin, config.frame_size - 1 - config.margin
    tau = np.linspace(0.0, 1.0, F)[:, None]
    tracks = np.empty((F, n, 2))
    for j in range(n):
        p0 = rng.uniform(lo, hi, size=2)
        p2 = np.clip(p0 + rng.normal(0, config.path_span / np.sqrt(2), size=2), lo, hi)
        q = np.clip(0.5 * (p0 + p2) + rng.normal(0, config.path_span / 2, size=2), lo, hi)
        # quadratic Bezier: stays inside the hull of (p0, q, p2), zero jerk
        path = (1 - tau) ** 2 * p0 + 2 * tau * (1 - tau) * q + tau**2 * p2
        if noise > 0:
            path = path + rng.normal(0, noise, size=path.shape)
        tracks[:, j, :] = np.clip(path, lo, hi)
    return tracks


def _background(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    S = config.frame_size
    tex = gaussian_filter(rng.normal(size=(S, S)), config.texture_scale, mode="wrap")
    tex = (tex - tex.mean()) / (tex.std() + 1e-12)
    return config.background_level + config.background_contrast * tex


def render_frames(config: SynthConfig, tracks: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    S, F = config.frame_size, config.frame_count
    rows = np.arange(S, dtype=np.float64)[:, None]
    cols = np.arange(S, dtype=np.float64)[None, :]
    bg = _background(config, rng)
    tissue_tex = gaussian_filter(rng.normal(size=(S, S)), 1.5, mode="wrap")
    tissue_tex = 12.0 * tissue_tex / (tissue_tex.std() + 1e-12)
    cy = S / 2 + rng.uniform(-S / 10, S / 10)
    cx = S / 2 + rng.uniform(-S / 10, S / 10)
    ry, rx = config.tissue_radii
    deform = rng.uniform(0, config.tissue_deform_max)
    phase = rng.uniform(0, 2 * np.pi)
    cycles = rng.uniform(*config.tissue_cycles)
    frames = np.empty((F, S, S), dtype=np.uint8)
    for t in range(F):
        wobble = 1.0 + deform * np.sin(2 * np.pi * cycles * t / F + phase)
        r2 = ((rows - cy) / (ry * wobble)) ** 2 + ((cols - cx) / (rx / wobble)) ** 2
        tissue_alpha = 1.0 / (1.0 + np.exp(8.0 * (np.sqrt(r2) - 1.0)))
        img = bg * (1 - tissue_alpha) + (config.tissue_level + tissue_tex) * tissue_alpha
        for u, v in tracks[t]:
            a = np.exp(-((rows - v) ** 2 + (cols - u) ** 2) / (2 * config.tool_sigma**2))
            img = img * (1 - a) + config.tool_level * a
        frames[t] = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return frames


def generate_episode(config: SynthConfig, seed: int, noise: float | None = None, user_id: int = 0,
                     supertrial_id: int = 0) -> Episode:
    """Render one episode; (config, seed, noise) fully determine the result.

    ``noise`` is the tool jitter std in pixels; by default it is drawn
    uniformly from [noise_min, noise_max] with the episode seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, seed]))
    if noise is None:
        noise = float(rng.uniform(config.noise_min, config.noise_max))
    tracks = _tool_tracks(config, noise, rng)
    frames = render_frames(config, tracks, rng)
    return Episode(frames=frames, score=score_from_tracks(tracks, config), user_id=user_id,
                   supertrial_id=supertrial_id, task_id=config.task_id, tool_tracks=tracks)


def user_noise_levels(config: SynthConfig, n_users: int) -> np.ndarray:
    """Per-user jitter levels, strictly increasing with the user index.

    Levels are evenly spaced in variance, which spaces the users' expected
    jerk (and hence their scores) evenly.
    """
    return np.sqrt(np.linspace(config.noise_min**2, config.noise_max**2, n_users))


def generate_dataset(config: SynthConfig, n_users: int, trials_per_user: int
                     ) -> tuple[list[Episode], list[str]]:
    """Users x trials grid of episodes plus their manifest names.

    User u repeats the task ``trials_per_user`` times (supertrial r); lower user
    indices jitter less and therefore score higher on average.
    """
    if n_users < 2 or trials_per_user < 2:
        raise ValueError("need at least 2 users and 2 trials per user")
    levels = user_noise_levels(config, n_users)
    episodes, names = [], []
    for u in range(n_users):
        for r in range(trials_per_user):
            idx = u * trials_per_user + r
            trial_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 7919, u, r]))
            noise = levels[u] * float(np.exp(trial_rng.normal(0, config.trial_spread)))
            episodes.append(generate_episode(config, seed=1_000_003 * (u + 1) + r, noise=noise,
                                             user_id=u, supertrial_id=r))
            names.append(f"episode_{idx:04d}")
    return episodes, names


# -- on-disk format -------------------------------------------------------------

META_KEYS = ("score", "user_id", "supertrial_id", "task_id", "frame_count", "width", "height")


def write_episode(ep: Episode, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    F, H, W = ep.frames.shape
    meta = {"score": repr(float(ep.score)), "user_id": ep.user_id, "supertrial_id": ep.supertrial_id,
            "task_id": ep.task_id, "frame_count": F, "width": W, "height": H}
    (path / "meta.txt").write_text("".join(f"{k}={meta[k]}\n" for k in META_KEYS))
    (path / "frames.bin").write_bytes(np.ascontiguousarray(ep.frames, dtype=np.uint8).tobytes())
    lines = []
    for t in range(F):
        coords = " ".join(repr(float(c)) for c in ep.tool_tracks[t].reshape(-1))
        lines.append(f"{t} {coords}".rstrip() + "\n")
    (path / "tools.txt").write_text("".join(lines))


def read_meta(path) -> dict[str, str]:
    meta = {}
    for line in (Path(path) / "meta.txt").read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed meta line {line!r} in {path}")
        meta[key.strip()] = value.strip()
    missing = [k for k in META_KEYS if k not in meta]
    if missing:
        raise KeyError(f"{path}: meta.txt lacks {missing}")
    return meta


def read_episode(path) -> Episode:
    path = Path(path)
    meta = read_meta(path)
    F, W, H = int(meta["frame_count"]), int(meta["width"]), int(meta["height"])
    raw = (path / "frames.bin").read_bytes()
    if len(raw) != F * H * W:
        raise ValueError(f"{path}: frames.bin has {len(raw)} bytes, expected {F * H * W}")
    frames = np.frombuffer(raw, dtype=np.uint8).reshape(F, H, W).copy()
    rows = []
    for line in (path / "tools.txt").read_text().splitlines():
        parts = line.split()
        if parts:
            rows.append([float(x) for x in parts[1:]])
    if len(rows) != F:
        raise ValueError(f"{path}: tools.txt has {len(rows)} lines, expected {F}")
    n = len(rows[0]) // 2
    tracks = np.array(rows, dtype=np.float64).reshape(F, n, 2)
    return Episode(frames=frames, score=float(meta["score"]), user_id=int(meta["user_id"]),
                   supertrial_id=int(meta["supertrial_id"]), task_id=int(meta["task_id"]),
                   tool_tracks=tracks)


def write_manifest(names, path) -> None:
    Path(path).write_text("".join(f"{n}\n" for n in names))


def read_manifest(path) -> list[str]:
    return [l.strip() for l in Path(path).read_text().splitlines() if l.strip()]


def write_dataset(episodes, names, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for ep, name in zip(episodes, names):
        write_episode(ep, out / name)
    write_manifest(names, out / "manifest.txt")
    return out


def load_dataset(root) -> tuple[list[Episode], list[str]]:
    root = Path(root)
    names = read_manifest(root / "manifest.txt")
    return [read_episode(root / n) for n in names], names


def config_with(config: SynthConfig, **changes) -> SynthConfig:
    known = {f.name for f in fields(SynthConfig)}
    bad = sorted(set(changes) - known)
    if bad:
        raise KeyError(f"unknown synth settings: {bad}")
    return replace(config, **changes)
