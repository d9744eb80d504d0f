"""Staged pipeline driver with a hash-checked artifact store.

Stages: fom -> pod -> rom-train -> left-basis -> ecm -> hrom -> compare.
Each stage writes its outputs atomically, records a manifest with the
hashes of everything it read and wrote, and is skipped on rerun when those
hashes still match. The whole pipeline is deterministic: identical configs
produce byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import matio
from .basis import (
    ReducedBasis,
    ROLE_LEFT_JACOBIAN,
    ROLE_LEFT_RESIDUAL,
    build_left_basis_jacobian,
    build_left_basis_residual,
    build_right_basis,
    collect_left_training_data,
)
from .campaign import SnapshotSet
from .ecm import (
    INTEGRAND_JACOBIAN_WEIGHTED,
    INTEGRAND_PLAIN,
    EcmQuadrature,
    build_complementary_mesh,
    build_ecm_training_matrix,
    compress_training_matrix,
    select_elements,
)
from .errors import ArtifactError, ConfigError
from .fom import NewtonSettings, run_fom_campaign
from .hrom import run_hrom_campaign
from .metrics import compare_snapshot_sets, measure_speedup, render_comparison_tables
from .problems import make_problem
from .rom import run_rom_campaign

STAGES = ("fom", "pod", "rom-train", "left-basis", "ecm", "hrom", "compare")
STRATEGIES = ("galerkin", "lspg", "pg-jacobian", "pg-residual")

_SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version", "problem", "training_parameters", "test_parameters",
    "tolerances", "solver", "strategies",
}
_TOLERANCE_KEYS = {"eps_u", "eps_psi", "eps_r", "eps_ecm"}
_SOLVER_KEYS = {"max_iterations", "rel_tolerance", "abs_tolerance", "step_length",
                "backtracking", "max_halvings"}


@dataclass(frozen=True)
class PipelineConfig:
    problem: dict
    training_parameters: list
    test_parameters: list
    tolerances: dict
    solver: dict
    strategies: list

    def canonical(self) -> dict:
        return {
            "schema_version": _SCHEMA_VERSION,
            "problem": self.problem,
            "training_parameters": self.training_parameters,
            "test_parameters": self.test_parameters,
            "tolerances": self.tolerances,
            "solver": self.solver,
            "strategies": list(self.strategies),
        }

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


def validate_config(payload: dict) -> PipelineConfig:
    """Validate a raw configuration mapping, rejecting unknown keys."""
    _require(isinstance(payload, dict), "config root must be an object")
    unknown = set(payload) - _TOP_KEYS
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    missing = _TOP_KEYS - set(payload)
    _require(not missing, f"missing config keys: {sorted(missing)}")
    _require(
        payload["schema_version"] == _SCHEMA_VERSION,
        f"schema_version must be {_SCHEMA_VERSION}, got {payload['schema_version']!r}",
    )
    _require(isinstance(payload["problem"], dict) and "name" in payload["problem"],
             "problem: must be an object with a 'name' field")

    training = payload["training_parameters"]
    _require(isinstance(training, list) and len(training) > 0,
             "training_parameters: must be a non-empty list of parameter vectors")
    for i, p in enumerate(training):
        _require(isinstance(p, list) and all(isinstance(x, (int, float)) for x in p),
                 f"training_parameters[{i}]: must be a list of numbers")
    test = payload["test_parameters"]
    _require(isinstance(test, list), "test_parameters: must be a list")
    for i, p in enumerate(test):
        _require(isinstance(p, list) and all(isinstance(x, (int, float)) for x in p),
                 f"test_parameters[{i}]: must be a list of numbers")
    widths = {len(p) for p in list(training) + list(test)}
    _require(len(widths) == 1, "parameter vectors must all share one length")

    tols = payload["tolerances"]
    _require(isinstance(tols, dict), "tolerances: must be an object")
    unknown = set(tols) - _TOLERANCE_KEYS
    _require(not unknown, f"tolerances: unknown keys {sorted(unknown)}")
    missing = _TOLERANCE_KEYS - set(tols)
    _require(not missing, f"tolerances: missing keys {sorted(missing)}")
    for key, value in tols.items():
        _require(isinstance(value, (int, float)) and 0.0 <= value <= 1.0,
                 f"tolerances.{key}: must lie in [0, 1], got {value!r}")

    solver = payload["solver"]
    _require(isinstance(solver, dict), "solver: must be an object")
    unknown = set(solver) - _SOLVER_KEYS
    _require(not unknown, f"solver: unknown keys {sorted(unknown)}")
    try:
        NewtonSettings(**solver)
    except Exception as exc:
        raise ConfigError(f"solver: {exc}") from exc

    strategies = payload["strategies"]
    _require(isinstance(strategies, list) and strategies,
             "strategies: must be a non-empty list")
    for s in strategies:
        _require(s in STRATEGIES,
                 f"strategies: unknown strategy {s!r}; valid names: {list(STRATEGIES)}")
    _require(len(set(strategies)) == len(strategies), "strategies: duplicates not allowed")

    return PipelineConfig(
        problem=payload["problem"],
        training_parameters=[list(map(float, p)) for p in training],
        test_parameters=[list(map(float, p)) for p in test],
        tolerances={k: float(v) for k, v in tols.items()},
        solver=dict(solver),
        strategies=list(strategies),
    )


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ArtifactError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return validate_config(payload)


def default_config(name: str) -> PipelineConfig:
    """Load one of the bundled campaign configurations ('bar', 'convdiff')."""
    ref = resources.files("promkit").joinpath(f"configs/{name}.json")
    try:
        payload = json.loads(ref.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"no bundled config named {name!r}") from exc
    return validate_config(payload)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write_bytes(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ArtifactStore:
    """Hash-tracked file store rooted at the pipeline output directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.manifest_dir = self.root / "manifests"

    def path(self, rel: str) -> Path:
        return self.root / rel

    def write_bytes(self, rel: str, data: bytes):
        _atomic_write_bytes(self.path(rel), data)

    def write_text(self, rel: str, text: str):
        self.write_bytes(rel, text.encode())

    def write_matrix(self, rel: str, a: np.ndarray):
        path = self.path(rel)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        os.close(fd)
        try:
            matio.write_matrix(tmp, a)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def read_matrix(self, rel: str) -> np.ndarray:
        return matio.read_matrix(self._existing(rel))

    def read_json(self, rel: str) -> dict:
        return json.loads(self._existing(rel).read_text())

    def _existing(self, rel: str) -> Path:
        path = self.path(rel)
        if not path.exists():
            raise ArtifactError(f"missing upstream artifact: {rel}")
        return path

    def hash_of(self, rel: str) -> str:
        return _sha256_file(self._existing(rel))

    def manifest_path(self, stage: str) -> Path:
        return self.manifest_dir / f"{stage}.json"

    def read_manifest(self, stage: str) -> dict | None:
        path = self.manifest_path(stage)
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def write_manifest(self, stage: str, manifest: dict):
        self.manifest_dir.mkdir(parents=True, exist_ok=True)
        _atomic_write_bytes(self.manifest_path(stage),
                            json.dumps(manifest, indent=2, sort_keys=True).encode())


class Pipeline:
    """Executes the staged campaign for one configuration."""

    def __init__(self, config: PipelineConfig, out_dir: str | Path, seed: int | None = None):
        self.config = config
        self.store = ArtifactStore(out_dir)
        self.seed = seed
        self.problem = make_problem(config.problem, config.training_parameters)
        self.settings = NewtonSettings(**config.solver)
        self.config_hash = config.hash()
        self.executed: list[str] = []
        self.skipped: list[str] = []

    # -- stage input/output declarations -------------------------------------

    def _strategy_dirs(self, base):
        return {s: f"{base}/{s}" for s in self.config.strategies}

    def stage_inputs(self, stage: str) -> list:
        ins = {
            "fom": [],
            "pod": ["fom/A_u.prmf", "fom/A_u.meta.json"],
            "rom-train": ["pod/phi.prmf", "pod/phi.meta.json"],
            "left-basis": ["rom_train/S_J.prmf", "rom_train/S_R.prmf",
                           "pod/phi.meta.json"],
            "ecm": ["pod/phi.prmf", "left_basis/psi_jacobian.prmf",
                    "left_basis/psi_residual.prmf"],
            "hrom": ["pod/phi.prmf", "left_basis/psi_jacobian.prmf",
                     "left_basis/psi_residual.prmf"]
                    + [f"ecm/{s}/quadrature.json" for s in self.config.strategies]
                    + (["ecm/lspg/complementary.json"]
                       if "lspg" in self.config.strategies else []),
            "compare": ["fom/A_u.prmf", "fom/A_u.meta.json", "pod/phi.prmf",
                        "left_basis/psi_jacobian.prmf", "left_basis/psi_residual.prmf"]
                       + [f"ecm/{s}/trajectory.prmf" for s in self.config.strategies]
                       + [f"ecm/{s}/quadrature.json" for s in self.config.strategies]
                       + [f"hrom/{s}/trajectory.prmf" for s in self.config.strategies]
                       + (["ecm/lspg/complementary.json"]
                          if "lspg" in self.config.strategies else []),
        }
        return ins[stage]

    # -- execution ------------------------------------------------------------

    def run_stage(self, stage: str) -> dict:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}; valid stages: {list(STAGES)}")
        inputs = self.stage_inputs(stage)
        self._check_inputs(stage, inputs)
        manifest = self.store.read_manifest(stage)
        if manifest is not None and self._is_current(manifest, inputs):
            self.skipped.append(stage)
            return manifest
        outputs = getattr(self, "_stage_" + stage.replace("-", "_"))()
        manifest = {
            "stage": stage,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "inputs": {rel: self.store.hash_of(rel) for rel in inputs},
            "outputs": {rel: self.store.hash_of(rel) for rel in outputs},
            "timestamp": time.time(),
        }
        self.store.write_manifest(stage, manifest)
        self.executed.append(stage)
        return manifest

    def run_all(self) -> dict:
        for stage in STAGES:
            self.run_stage(stage)
        return {"executed": list(self.executed), "skipped": list(self.skipped)}

    def _is_current(self, manifest: dict, inputs: list) -> bool:
        if manifest.get("config_hash") != self.config_hash:
            return False
        if set(manifest.get("inputs", {})) != set(inputs):
            return False
        for rel, sha in manifest["inputs"].items():
            if not self.store.path(rel).exists() or self.store.hash_of(rel) != sha:
                return False
        for rel, sha in manifest.get("outputs", {}).items():
            if not self.store.path(rel).exists() or self.store.hash_of(rel) != sha:
                return False
        return True

    def _check_inputs(self, stage: str, inputs: list):
        """Every input must exist and match the hash its producer recorded."""
        produced = {}
        for upstream in STAGES[: STAGES.index(stage)]:
            manifest = self.store.read_manifest(upstream)
            if manifest:
                produced.update(manifest.get("outputs", {}))
        for rel in inputs:
            if not self.store.path(rel).exists():
                raise ArtifactError(
                    f"stage {stage!r}: missing upstream artifact {rel!r}"
                )
            if rel in produced and self.store.hash_of(rel) != produced[rel]:
                raise ArtifactError(
                    f"stage {stage!r}: hash mismatch for {rel!r} (stale or corrupted)"
                )

    # -- individual stages ----------------------------------------------------

    def _stage_fom(self) -> list:
        result = run_fom_campaign(self.problem, self.settings)
        self.store.write_matrix("fom/A_u.prmf", result.snapshots.matrix)
        meta = result.snapshots.manifest()
        meta["report"] = json.loads(result.report.to_json())
        self.store.write_text("fom/A_u.meta.json", json.dumps(meta, indent=2))
        return ["fom/A_u.prmf", "fom/A_u.meta.json"]

    def _load_snapshots(self, matrix_rel: str, meta_rel: str) -> SnapshotSet:
        return SnapshotSet.from_manifest(
            self.store.read_matrix(matrix_rel), self.store.read_json(meta_rel)
        )

    def _stage_pod(self) -> list:
        a_u = self.store.read_matrix("fom/A_u.prmf")
        phi = build_right_basis(a_u, self.config.tolerances["eps_u"])
        self.store.write_matrix("pod/phi.prmf", phi.matrix)
        self.store.write_text("pod/phi.meta.json", json.dumps({
            "role": phi.role,
            "tolerance": phi.tolerance,
            "n_modes": phi.n_modes,
            "source": self.store.hash_of("fom/A_u.prmf"),
        }, indent=2))
        return ["pod/phi.prmf", "pod/phi.meta.json"]

    def _load_basis(self, rel: str, role: str, tolerance: float) -> ReducedBasis:
        return ReducedBasis(matrix=self.store.read_matrix(rel), tolerance=tolerance,
                            role=role)

    def _phi(self) -> ReducedBasis:
        return self._load_basis("pod/phi.prmf", "right-phi",
                                self.config.tolerances["eps_u"])

    def _stage_rom_train(self) -> list:
        phi = self._phi()
        data = collect_left_training_data(self.problem, phi, self.settings)
        self.store.write_matrix("rom_train/S_J.prmf", data.s_jacobian)
        self.store.write_matrix("rom_train/S_R.prmf", data.s_residual)
        self.store.write_text("rom_train/log.json", json.dumps({
            "jacobian_columns": data.jacobian_log.snapshot_count,
            "residual_columns": data.residual_log.snapshot_count,
            "residual_columns_per_timestep": data.residual_log.columns_per_timestep,
        }, indent=2))
        return ["rom_train/S_J.prmf", "rom_train/S_R.prmf", "rom_train/log.json"]

    def _stage_left_basis(self) -> list:
        n_modes = int(self.store.read_json("pod/phi.meta.json")["n_modes"])
        s_j = self.store.read_matrix("rom_train/S_J.prmf")
        s_r = self.store.read_matrix("rom_train/S_R.prmf")
        psi_j = build_left_basis_jacobian(s_j, self.config.tolerances["eps_psi"],
                                          min_modes=n_modes)
        psi_r = build_left_basis_residual(s_r, self.config.tolerances["eps_r"],
                                          min_modes=n_modes)
        outputs = []
        for rel, basis, source in (
            ("left_basis/psi_jacobian", psi_j, "rom_train/S_J.prmf"),
            ("left_basis/psi_residual", psi_r, "rom_train/S_R.prmf"),
        ):
            self.store.write_matrix(rel + ".prmf", basis.matrix)
            self.store.write_text(rel + ".meta.json", json.dumps({
                "role": basis.role,
                "tolerance": basis.tolerance,
                "n_modes": basis.n_modes,
                "source": self.store.hash_of(source),
            }, indent=2))
            outputs += [rel + ".prmf", rel + ".meta.json"]
        return outputs

    def _bases(self):
        phi = self._phi()
        psi_j = self._load_basis("left_basis/psi_jacobian.prmf", ROLE_LEFT_JACOBIAN,
                                 self.config.tolerances["eps_psi"])
        psi_r = self._load_basis("left_basis/psi_residual.prmf", ROLE_LEFT_RESIDUAL,
                                 self.config.tolerances["eps_r"])
        return phi, psi_j, psi_r

    def _rom_args(self, strategy, phi, psi_j, psi_r):
        if strategy == "galerkin":
            return "galerkin", None
        if strategy == "lspg":
            return "lspg", None
        if strategy == "pg-jacobian":
            return "pg", psi_j
        if strategy == "pg-residual":
            return "pg", psi_r
        raise ConfigError(f"unknown strategy {strategy!r}")

    def _ecm_projection(self, strategy, phi, psi_j, psi_r):
        if strategy == "galerkin":
            return phi, INTEGRAND_PLAIN
        if strategy == "lspg":
            return phi, INTEGRAND_JACOBIAN_WEIGHTED
        if strategy == "pg-jacobian":
            return psi_j, INTEGRAND_PLAIN
        return psi_r, INTEGRAND_PLAIN

    def _stage_ecm(self) -> list:
        phi, psi_j, psi_r = self._bases()
        outputs = []
        for strategy in self.config.strategies:
            kind, psi = self._rom_args(strategy, phi, psi_j, psi_r)
            result = run_rom_campaign(self.problem, kind, phi, psi=psi,
                                      settings=self.settings)
            base = f"ecm/{strategy}"
            self.store.write_matrix(f"{base}/trajectory.prmf",
                                    result.snapshots.matrix)
            self.store.write_text(f"{base}/trajectory.meta.json",
                                  json.dumps(result.snapshots.manifest(), indent=2))
            self.store.write_text(f"{base}/report.json", result.report.to_json())

            proj, integrand = self._ecm_projection(strategy, phi, psi_j, psi_r)
            training = build_ecm_training_matrix(self.problem, proj,
                                                 result.snapshots, integrand=integrand)
            eps = self.config.tolerances["eps_ecm"]
            theta, b_theta = compress_training_matrix(training.x, eps)
            quadrature = select_elements(theta, b_theta, eps, provenance={
                "strategy": strategy,
                "integrand": integrand,
                "basis_hash": hashlib.sha256(np.ascontiguousarray(
                    proj.matrix if hasattr(proj, "matrix") else proj).tobytes()
                ).hexdigest(),
                "trajectory_hash": self.store.hash_of(f"{base}/trajectory.prmf"),
            })
            self.store.write_text(f"{base}/quadrature.json", quadrature.to_json())
            outputs += [f"{base}/trajectory.prmf", f"{base}/trajectory.meta.json",
                        f"{base}/report.json", f"{base}/quadrature.json"]
            if strategy == "lspg":
                comp = build_complementary_mesh(quadrature.z, self.problem.mesh)
                self.store.write_text(f"{base}/complementary.json",
                                      json.dumps({"elements": comp.tolist()}))
                outputs.append(f"{base}/complementary.json")
        return outputs

    def _load_quadrature(self, strategy) -> EcmQuadrature:
        return EcmQuadrature.from_json(
            self.store._existing(f"ecm/{strategy}/quadrature.json")
        )

    def _load_complementary(self) -> np.ndarray:
        payload = self.store.read_json("ecm/lspg/complementary.json")
        return np.asarray(payload["elements"], dtype=int)

    def _run_hrom(self, strategy, phi, psi_j, psi_r, parameters=None):
        quadrature = self._load_quadrature(strategy)
        kind, psi = self._rom_args(strategy, phi, psi_j, psi_r)
        complementary = self._load_complementary() if strategy == "lspg" else None
        return run_hrom_campaign(
            self.problem, kind, phi, quadrature, psi=psi,
            complementary=complementary, settings=self.settings,
            parameters=parameters,
            quadrature_id=self.store.hash_of(f"ecm/{strategy}/quadrature.json"),
        )

    def _stage_hrom(self) -> list:
        phi, psi_j, psi_r = self._bases()
        outputs = []
        for strategy in self.config.strategies:
            result = self._run_hrom(strategy, phi, psi_j, psi_r)
            base = f"hrom/{strategy}"
            self.store.write_matrix(f"{base}/trajectory.prmf", result.snapshots.matrix)
            self.store.write_text(f"{base}/trajectory.meta.json",
                                  json.dumps(result.snapshots.manifest(), indent=2))
            self.store.write_text(f"{base}/report.json", result.report.to_json())
            outputs += [f"{base}/trajectory.prmf", f"{base}/trajectory.meta.json",
                        f"{base}/report.json"]
        return outputs

    def _stage_compare(self) -> list:
        phi, psi_j, psi_r = self._bases()
        variable = self.problem.state_label
        fom_train = self._load_snapshots("fom/A_u.prmf", "fom/A_u.meta.json")

        training_reports = []
        for strategy in self.config.strategies:
            rom_m = self.store.read_matrix(f"ecm/{strategy}/trajectory.prmf")
            hrom_m = self.store.read_matrix(f"hrom/{strategy}/trajectory.prmf")
            training_reports.append(
                compare_snapshot_sets(strategy, variable, fom_train.matrix,
                                      rom_m, hrom_m)
            )
        self.store.write_text("compare/training_tables.csv",
                              render_comparison_tables(training_reports))
        outputs = ["compare/training_tables.csv"]

        summary = {"training": {r.strategy: {
            "fom_vs_rom": r.fom_vs_rom,
            "rom_vs_hrom": r.rom_vs_hrom,
            "fom_vs_hrom": r.fom_vs_hrom,
        } for r in training_reports}}

        testing_reports = []
        if self.config.test_parameters:
            test_params = [tuple(p) for p in self.config.test_parameters]
            fom_test = run_fom_campaign(self.problem, self.settings,
                                        parameters=test_params)
            summary["testing"] = {}
            for strategy in self.config.strategies:
                kind, psi = self._rom_args(strategy, phi, psi_j, psi_r)
                rom_test = run_rom_campaign(self.problem, kind, phi, psi=psi,
                                            settings=self.settings,
                                            parameters=test_params)
                hrom_test = self._run_hrom(strategy, phi, psi_j, psi_r,
                                           parameters=test_params)
                testing_reports.append(
                    compare_snapshot_sets(strategy, variable,
                                          fom_test.snapshots.matrix,
                                          rom_test.snapshots.matrix,
                                          hrom_test.snapshots.matrix)
                )
                rom_speed = measure_speedup(fom_test.report, rom_test.report)
                hrom_speed = measure_speedup(fom_test.report, hrom_test.report)
                summary["testing"][strategy] = {
                    "fom_vs_rom": testing_reports[-1].fom_vs_rom,
                    "rom_vs_hrom": testing_reports[-1].rom_vs_hrom,
                    "fom_vs_hrom": testing_reports[-1].fom_vs_hrom,
                    "rom_element_work_ratio": rom_speed.element_work_ratio,
                    "hrom_element_work_ratio": hrom_speed.element_work_ratio,
                    "rom_wall_time_ratio": rom_speed.wall_time_ratio,
                    "hrom_wall_time_ratio": hrom_speed.wall_time_ratio,
                }
        self.store.write_text("compare/testing_tables.csv",
                              render_comparison_tables(testing_reports))
        self.store.write_text("compare/summary.json", json.dumps(summary, indent=2))
        outputs += ["compare/testing_tables.csv", "compare/summary.json"]
        return outputs


def run_stage(stage: str, config: PipelineConfig, out_dir, seed=None) -> dict:
    return Pipeline(config, out_dir, seed=seed).run_stage(stage)


def run_pipeline(config: PipelineConfig, out_dir, seed=None) -> dict:
    pipeline = Pipeline(config, out_dir, seed=seed)
    summary = pipeline.run_all()
    return summary


def list_artifacts(out_dir) -> list:
    store = ArtifactStore(out_dir)
    rows = []
    for stage in STAGES:
        manifest = store.read_manifest(stage)
        if manifest is None:
            continue
        for rel, sha in sorted(manifest.get("outputs", {}).items()):
            rows.append({"stage": stage, "path": rel, "sha256": sha})
    return rows
