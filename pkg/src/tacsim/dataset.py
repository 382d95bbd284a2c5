"""Sweep execution, dataset serialization, ablations, built-in objects.

Dataset layout under an output root:
    <root>/<object>/<episode_id>/frames/NNNN.png
    <root>/<object>/<episode_id>/markers.csv
    <root>/<object>/<episode_id>/episode.json
    <root>/manifest.jsonl    one JSON object per episode
    <root>/manifest.json     class counts, version, configuration hash

Episode ids are zero-padded grid indices, so identical specs always produce
identical trees.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .contact import ContactParams
from .errors import NoGraspContact, TacsimError, VolumeUnreachable
from .geometry import DepthCamera, TriangleMesh, load_mesh, make_box, make_cylinder, make_icosphere, make_l_bracket
from .grasp import GraspConfig, GraspEpisode, GraspThresholds, ObjectModel, run_episode, save_episode
from .optics import LookupTable

log = logging.getLogger(__name__)

BALANCE_WARN_FRACTION = 0.2


# ---------------------------------------------------------------------------
# built-in objects (zero external assets needed to run the full pipeline)


def _on_table(mesh: TriangleMesh) -> TriangleMesh:
    lo, _ = mesh.bounds()
    return TriangleMesh(mesh.vertices - np.array([0.0, 0.0, lo[2]]), mesh.faces.copy())


def _bracket_com(leg: float, width: float, thickness: float) -> tuple[float, float, float]:
    """Uniform-density center of mass of the L-bracket's two overlapping boxes."""
    foot_v = leg * width * thickness
    post_v = thickness * width * leg
    overlap_v = thickness * width * thickness
    offset = (leg - thickness) / 2.0
    union_v = foot_v + post_v - overlap_v
    x = (post_v * -offset - overlap_v * -offset) / union_v
    z = (foot_v * -offset - overlap_v * -offset) / union_v
    return (x, 0.0, z + leg / 2.0)  # shifted onto the table


def builtin_objects() -> dict[str, ObjectModel]:
    """Primitive test objects resting on the table plane.

    Sized so that object edges fall inside the sensor's 19.2 x 14.4 mm field
    of view: the grasp variables that decide the outcome (force through
    contact geometry, location through edge positions) are then visible in
    single tactile frames.
    """
    box = _on_table(make_box((16.0, 24.0, 60.0)))
    sphere = _on_table(make_icosphere(30.0, 3))
    cylinder = _on_table(make_cylinder(9.0, 60.0))
    bracket = _on_table(make_l_bracket(40.0, 20.0, 14.0))
    return {
        "box": ObjectModel(box, 0.7, (0.0, 0.0, 30.0), 0.45, "box"),
        "sphere": ObjectModel(sphere, 0.3, (0.0, 0.0, 30.0), 0.5, "sphere"),
        "cylinder": ObjectModel(cylinder, 0.6, (0.0, 0.0, 30.0), 0.45, "cylinder"),
        "bracket": ObjectModel(bracket, 0.4, _bracket_com(40.0, 20.0, 14.0),
                               0.45, "bracket"),
    }


def resolve_object(ref: str | dict, mu: float | None = None,
                   mass: float | None = None) -> ObjectModel:
    """Builtin name, or an object-spec dict {mesh, mass, center_of_mass, mu}."""
    if isinstance(ref, str):
        objects = builtin_objects()
        if ref not in objects:
            raise TacsimError(f"unknown object {ref!r}; builtins: {sorted(objects)}")
        obj = objects[ref]
    else:
        mesh = _on_table(load_mesh(ref["mesh"], scale=ref.get("scale", 1.0)))
        obj = ObjectModel(mesh, ref["mass"], tuple(ref["center_of_mass"]),
                          ref.get("mu", 0.45), ref.get("name", Path(ref["mesh"]).stem))
    if mu is not None:
        obj = replace(obj, mu=mu)
    if mass is not None:
        obj = replace(obj, mass=mass)
    return obj


# ---------------------------------------------------------------------------
# sweep specification


DEFAULT_FORCES = (5.0, 6.0, 7.0, 8.0, 9.0, 10.0)


@dataclass(frozen=True)
class SweepSpec:
    """Grasp-space discretization plus split bookkeeping."""

    object_name: str = "box"
    forces: tuple[float, ...] = DEFAULT_FORCES
    heights: tuple[float, ...] = (20.0, 40.0, 60.0, 70.0)
    xy: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    added_masses: tuple[float, ...] = ()  # kg on top of the object's own mass
    seed: int = 0
    train_count: int = 0
    test_count: int = 0

    def __post_init__(self):
        for axis, name in ((self.forces, "forces"), (self.heights, "heights"),
                           (self.xy, "xy")):
            if len(axis) == 0:
                raise ValueError(f"sweep axis {name!r} is empty")
        total = self.total_episodes()
        if self.train_count + self.test_count > total:
            raise ValueError(
                f"split {self.train_count}+{self.test_count} exceeds grid size {total}")

    def total_episodes(self) -> int:
        masses = max(len(self.added_masses), 1)
        return masses * len(self.forces) * len(self.heights) * len(self.xy)

    def to_dict(self) -> dict:
        return {
            "object": self.object_name,
            "forces": list(self.forces),
            "heights": list(self.heights),
            "xy": [list(p) for p in self.xy],
            "added_masses": list(self.added_masses),
            "seed": self.seed,
            "train_count": self.train_count,
            "test_count": self.test_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        return cls(
            object_name=data.get("object", "box"),
            forces=tuple(data.get("forces", DEFAULT_FORCES)),
            heights=tuple(data["heights"]),
            xy=tuple(tuple(p) for p in data.get("xy", [(0.0, 0.0)])),
            added_masses=tuple(data.get("added_masses", ())),
            seed=int(data.get("seed", 0)),
            train_count=int(data.get("train_count", 0)),
            test_count=int(data.get("test_count", 0)),
        )


def generate_configs(spec: SweepSpec) -> list[GraspConfig]:
    """Cartesian product of the grasp axes in deterministic order."""
    return [GraspConfig(f, x, y, z)
            for f in spec.forces for z in spec.heights for (x, y) in spec.xy]


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class ManifestEntry:
    path: str          # episode directory, relative to the dataset root
    object_id: str
    config: GraspConfig
    label: str         # outcome label, or "error"
    split: str         # train | test | extra
    added_mass: float = 0.0
    error: str | None = None


@dataclass
class DatasetManifest:
    root: Path
    entries: list[ManifestEntry]
    class_counts: dict[str, int]
    version: str
    config_hash: str
    balance_warning: bool = False

    def split_entries(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]


def _config_hash(spec: SweepSpec, params: ContactParams, thresholds: GraspThresholds,
                 camera: DepthCamera) -> str:
    payload = {
        "spec": spec.to_dict(),
        "params": asdict(params),
        "thresholds": asdict(thresholds),
        "camera": {"width": camera.width, "height": camera.height,
                   "pixel_pitch": camera.pixel_pitch},
        "version": __version__,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _assign_splits(n: int, spec: SweepSpec) -> list[str]:
    order = list(range(n))
    random.Random(spec.seed).shuffle(order)
    splits = ["extra"] * n
    for k in order[:spec.train_count]:
        splits[k] = "train"
    for k in order[spec.train_count:spec.train_count + spec.test_count]:
        splits[k] = "test"
    return splits


def run_sweep(spec: SweepSpec, obj: ObjectModel, params: ContactParams,
              table: LookupTable | None, thresholds: GraspThresholds,
              out_dir: str | Path, camera: DepthCamera | None = None,
              threads: int = 1, record_frames: bool = True) -> DatasetManifest:
    """Run every configured grasp, serialize episodes, and write the manifest.

    Per-episode failures (unreachable grasps, unreachable volumes) become
    manifest entries with label "error" rather than aborting the sweep.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = generate_configs(spec)
    masses = spec.added_masses if spec.added_masses else (0.0,)
    jobs = [(am, cfg) for am in masses for cfg in configs]
    splits = _assign_splits(len(jobs), spec)

    def simulate(job) -> tuple[GraspEpisode | None, str | None]:
        added_mass, config = job
        episode_obj = obj if added_mass == 0.0 else replace(obj, mass=obj.mass + added_mass)
        try:
            return run_episode(episode_obj, config, params, table, thresholds,
                               camera=camera, record_frames=record_frames), None
        except (NoGraspContact, VolumeUnreachable) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(simulate, jobs))
    else:
        results = [simulate(job) for job in jobs]

    entries: list[ManifestEntry] = []
    for i, ((added_mass, config), (episode, error)) in enumerate(zip(jobs, results)):
        rel = f"{obj.name}/{i:06d}"
        if episode is None:
            entries.append(ManifestEntry(rel, obj.name, config, "error", splits[i],
                                         added_mass, error))
            continue
        save_episode(episode, out_dir / rel)
        entries.append(ManifestEntry(rel, obj.name, config, episode.outcome.label,
                                     splits[i], added_mass))

    class_counts: dict[str, int] = {}
    for e in entries:
        class_counts[e.label] = class_counts.get(e.label, 0) + 1
    manifest = DatasetManifest(out_dir, entries, class_counts, __version__,
                               _config_hash(spec, params, thresholds,
                                            camera or DepthCamera.gelsight()))
    labeled = [e for e in entries if e.label != "error"]
    if labeled:
        successes = sum(1 for e in labeled if e.label == "Success")
        fraction = min(successes, len(labeled) - successes) / len(labeled)
        if fraction < BALANCE_WARN_FRACTION:
            manifest.balance_warning = True
            log.warning("dataset is imbalanced: %d/%d successful grasps",
                        successes, len(labeled))
    write_manifest(manifest, spec)
    return manifest


def _entry_dict(entry: ManifestEntry) -> dict:
    d = {
        "path": entry.path,
        "object": entry.object_id,
        "config": {"force": entry.config.force, "x": entry.config.x,
                   "y": entry.config.y, "z": entry.config.z},
        "label": entry.label,
        "split": entry.split,
        "added_mass": entry.added_mass,
    }
    if entry.error:
        d["error"] = entry.error
    return d


def write_manifest(manifest: DatasetManifest, spec: SweepSpec,
                   jsonl_name: str = "manifest.jsonl") -> None:
    with open(manifest.root / jsonl_name, "w") as fh:
        for entry in manifest.entries:
            fh.write(json.dumps(_entry_dict(entry), sort_keys=True))
            fh.write("\n")
    meta = {
        "class_counts": manifest.class_counts,
        "version": manifest.version,
        "config_hash": manifest.config_hash,
        "balance_warning": manifest.balance_warning,
        "spec": spec.to_dict(),
    }
    with open(manifest.root / "manifest.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(root: str | Path, jsonl_name: str = "manifest.jsonl") -> DatasetManifest:
    root = Path(root)
    entries = []
    with open(root / jsonl_name) as fh:
        for line in fh:
            d = json.loads(line)
            entries.append(ManifestEntry(
                d["path"], d["object"],
                GraspConfig(d["config"]["force"], d["config"]["x"],
                            d["config"]["y"], d["config"]["z"]),
                d["label"], d["split"], d.get("added_mass", 0.0), d.get("error")))
    with open(root / "manifest.json") as fh:
        meta = json.load(fh)
    return DatasetManifest(root, entries, meta["class_counts"], meta["version"],
                           meta["config_hash"], meta["balance_warning"])


def rescan_episodes(root: str | Path) -> dict[str, str]:
    """Episode path -> label found on disk; for manifest integrity checks."""
    root = Path(root)
    found = {}
    for episode_json in sorted(root.glob("*/*/episode.json")):
        with open(episode_json) as fh:
            data = json.load(fh)
        found[str(episode_json.parent.relative_to(root))] = data["outcome"]["label"]
    return found


# ---------------------------------------------------------------------------
# ablations


ABLATION_KINDS = ("dataset_size", "friction", "center_of_mass")


def ablation_sweep(kind: str, values: list[float], spec: SweepSpec,
                   obj: ObjectModel, params: ContactParams,
                   table: LookupTable | None, thresholds: GraspThresholds,
                   out_dir: str | Path, camera: DepthCamera | None = None,
                   threads: int = 1, record_frames: bool = True) -> dict:
    """Regenerate (or subsample) datasets along one ablation axis.

    dataset_size: one shared sweep, manifests subsampled to each train size.
    friction: one dataset per overridden friction coefficient.
    center_of_mass: one dataset per center-of-mass offset (meters, along the
    longest bounding-box axis).
    """
    if kind not in ABLATION_KINDS:
        raise ValueError(f"unknown ablation kind {kind!r}; expected one of {ABLATION_KINDS}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []

    if kind == "dataset_size":
        sizes = [int(v) for v in values]
        pool_spec = spec if spec.train_count >= max(sizes) else replace(
            spec, train_count=max(sizes))
        base = run_sweep(pool_spec, obj, params, table, thresholds,
                         out_dir / "pool", camera, threads, record_frames)
        # Subsample in the seeded shuffle order, not manifest (grid) order:
        # grid order is sorted by force, and a prefix of it would collapse to
        # a single outcome class. Shuffle-order prefixes stay nested AND
        # preserve the class mixture.
        order = list(range(len(base.entries)))
        random.Random(pool_spec.seed).shuffle(order)
        train = [base.entries[i] for i in order if base.entries[i].split == "train"]
        test = base.split_entries("test")
        for size in sizes:
            if size > len(train):
                raise ValueError(f"train pool has {len(train)} episodes, need {size}")
            subset = train[:size] + test  # nested: smaller sizes are prefixes
            name = f"manifest_size_{size}.jsonl"
            sub = DatasetManifest(base.root, subset, _count_labels(subset),
                                  base.version, base.config_hash)
            write_manifest(sub, pool_spec, jsonl_name=name)
            rows.append({"value": size, "manifest": str(base.root / name),
                         "train": size, "test": len(test),
                         "class_counts": sub.class_counts})
    elif kind == "friction":
        for mu in values:
            dataset_dir = out_dir / f"friction_{mu:g}"
            manifest = run_sweep(spec, replace(obj, mu=float(mu)), params, table,
                                 thresholds, dataset_dir, camera, threads, record_frames)
            rows.append({"value": mu, "manifest": str(dataset_dir / "manifest.jsonl"),
                         "train": len(manifest.split_entries("train")),
                         "test": len(manifest.split_entries("test")),
                         "class_counts": manifest.class_counts})
    else:  # center_of_mass, values in meters along the longest bbox axis
        lo, hi = obj.mesh.bounds()
        axis = int(np.argmax(hi - lo))
        for offset_m in values:
            com = list(obj.center_of_mass)
            com[axis] += float(offset_m) * 1000.0
            dataset_dir = out_dir / f"com_{offset_m:g}"
            manifest = run_sweep(spec, replace(obj, center_of_mass=tuple(com)),
                                 params, table, thresholds, dataset_dir, camera,
                                 threads, record_frames)
            rows.append({"value": offset_m, "manifest": str(dataset_dir / "manifest.jsonl"),
                         "train": len(manifest.split_entries("train")),
                         "test": len(manifest.split_entries("test")),
                         "class_counts": manifest.class_counts})

    report = {"kind": kind, "object": obj.name, "rows": rows}
    with open(out_dir / f"ablation_{kind}.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def _count_labels(entries: list[ManifestEntry]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for e in entries:
        counts[e.label] = counts.get(e.label, 0) + 1
    return counts
