"""Run artifacts: episodes.csv, plot-panel data, score dumps, manifest.

CSV content is a pure function of the records (full-precision floats via
repr), so identical runs produce byte-identical files. The manifest adds
timestamps and checksums and is excluded from determinism comparisons.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .conformal import save_scores_csv
from .episodic import EpisodeRecord
from .errors import ConfigurationError

EPISODE_COLUMNS = (
    "j,r,q,alpha_bar,kappa_raw,kappa_used,cost,tube_coverage,"
    "safety_coverage,dr,dpi,feasible"
)

PANELS = {
    "radius_vs_episode.csv": ("r", "radius-vs-episode"),
    "cost_vs_episode.csv": ("cost", "cost-vs-episode"),
    "tube_coverage_vs_episode.csv": ("tube_coverage", "tube-coverage-vs-episode"),
    "safety_coverage_vs_episode.csv": ("safety_coverage", "safety-coverage-vs-episode"),
}


@dataclass
class RunManifest:
    """Provenance of one run: config hash, seeds, version, file checksums."""

    config_hash: str
    seed_root: int
    artifact_version: str = __version__
    created_utc: str = ""
    files: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        data = {
            "config_hash": self.config_hash,
            "seed_root": self.seed_root,
            "artifact_version": self.artifact_version,
            "created_utc": self.created_utc,
            "files": dict(sorted(self.files.items())),
        }
        return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _fmt(value: float) -> str:
    return repr(float(value))


def episodes_csv_text(records: list[EpisodeRecord]) -> str:
    lines = [EPISODE_COLUMNS]
    for rec in records:
        lines.append(
            ",".join(
                [
                    str(rec.j),
                    _fmt(rec.r),
                    _fmt(rec.q),
                    _fmt(rec.alpha_bar),
                    _fmt(rec.kappa_raw),
                    _fmt(rec.kappa_used),
                    _fmt(rec.cost),
                    _fmt(rec.tube_coverage),
                    _fmt(rec.safety_coverage),
                    _fmt(rec.dr),
                    _fmt(rec.dpi),
                    "true" if rec.feasible else "false",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def panel_csv_text(records: list[EpisodeRecord], column: str) -> str:
    lines = [f"j,{column}"]
    for rec in records:
        lines.append(f"{rec.j},{_fmt(getattr(rec, column))}")
    return "\n".join(lines) + "\n"


def write_outputs(
    records: list[EpisodeRecord],
    out_dir,
    config_hash: str,
    seed_root: int,
    dump_scores: bool = False,
    extra_files: dict[str, str] | None = None,
) -> RunManifest:
    """Write all artifacts for a run and return the manifest (also written).

    extra_files maps file names to text content (e.g. diagnostic traces).
    """
    if not records:
        raise ConfigurationError("write_outputs needs at least one episode record")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output dir {out}: {exc}") from exc

    texts: dict[str, str] = {"episodes.csv": episodes_csv_text(records)}
    for fname, (column, _) in PANELS.items():
        texts[fname] = panel_csv_text(records, column)
    for fname, text in (extra_files or {}).items():
        texts[fname] = text

    manifest = RunManifest(config_hash=config_hash, seed_root=seed_root)
    manifest.created_utc = datetime.now(timezone.utc).isoformat()
    for fname, text in texts.items():
        path = out / fname
        try:
            path.write_text(text)
        except OSError as exc:
            raise ConfigurationError(f"cannot write {path}: {exc}") from exc
        manifest.files[fname] = hashlib.sha256(text.encode()).hexdigest()

    if dump_scores:
        for rec in records:
            if rec.scores is None:
                continue
            fname = f"scores_j{rec.j}.csv"
            path = out / fname
            save_scores_csv(rec.scores, path)
            manifest.files[fname] = hashlib.sha256(path.read_bytes()).hexdigest()

    (out / "manifest.json").write_text(manifest.to_json())
    return manifest
