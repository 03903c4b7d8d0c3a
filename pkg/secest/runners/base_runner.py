"""
Experiment runner: orchestrates one named experiment, persists its tables and
summaries under results/run_<timestamp>, and optionally enforces the table
invariants (self-check mode).
"""

import copy
import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import pandas as pd

from secest.utils import format_duration, get_timestamp
from secest.utils.report_generator import ReportGenerator

logger = logging.getLogger(__name__)

EXPERIMENTS = ("montecarlo", "p_sweep", "mitm", "gps_spoof", "fixed_vs_roving", "decoder_equivalence")


class ExperimentRunner:
    """
    Runs one experiment from a loaded configuration.

    Each ``_run_<name>`` method returns a payload dict with:
    - summary: JSON-serializable facts
    - tables: {name: DataFrame} written as CSV and rendered in the Markdown summary
    - violations: invariant violations (fail the run in self-check mode)
    """

    def __init__(self, experiment: str, config: Dict[str, Any],
                 runtime_overrides: Optional[Dict[str, Any]] = None,
                 output_root: Optional[str] = None):
        """
        Args:
            experiment: One of EXPERIMENTS
            config: Configuration dictionary (see SecestConfig)
            runtime_overrides: Dot-notation overrides, e.g. {"montecarlo.p": 12}
            output_root: Directory holding the run folders (default reporting.output_dir)
        """
        if experiment not in EXPERIMENTS:
            raise ValueError(f"Unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
        self.experiment = experiment
        self.config = copy.deepcopy(config)
        self.runtime_overrides = runtime_overrides or {}
        self.logger = logging.getLogger(f"{__name__}.{experiment}")

        self._apply_runtime_overrides()

        # options (set via set_options)
        self.self_check = False
        self.report_formats = list(self.config.get("reporting", {}).get("formats", ["json", "csv"]))
        self.sources: Optional[List[str]] = None
        self.p_values: List[int] = [8, 10, 12]
        self.n_y: Optional[int] = None
        self.trials: Optional[int] = None

        root = Path(output_root or self.config.get("reporting", {}).get("output_dir", "results"))
        self.timestamp = get_timestamp()
        self.results_dir = root / f"run_{self.timestamp}"
        self.results_dir.mkdir(parents=True, exist_ok=True)

        logger.info(f"Initialized runner for experiment: {experiment}")
        logger.info(f"Results will be saved to: {self.results_dir}")

    def _apply_runtime_overrides(self):
        """Apply runtime configuration overrides using dot notation"""
        for key, value in self.runtime_overrides.items():
            self._set_nested_config(self.config, key, value)
            self.logger.debug(f"Applied runtime override: {key} = {value}")

    @staticmethod
    def _set_nested_config(config: Dict, key_path: str, value: Any):
        keys = key_path.split('.')
        current = config
        for key in keys[:-1]:
            current = current.setdefault(key, {})
        current[keys[-1]] = value

    def set_options(self, **kwargs):
        """Set execution options for the runner"""
        for key, value in kwargs.items():
            if hasattr(self, key) and value is not None:
                setattr(self, key, value)
                logger.debug(f"Set option {key} = {value}")

    def run(self) -> Dict[str, Any]:
        """
        Execute the experiment and write its reports.

        Returns:
            Dictionary with success flag, results_dir, summary, report paths and
            any invariant violations
        """
        result: Dict[str, Any] = {
            "experiment": self.experiment,
            "timestamp": self.timestamp,
            "results_dir": str(self.results_dir),
            "success": False,
        }
        try:
            start = time.time()
            payload = self._dispatch()[self.experiment]()
            duration = time.time() - start
            payload["summary"]["duration"] = format_duration(duration)

            result["summary"] = payload["summary"]
            result["violations"] = payload.get("violations", [])
            result["reports"] = self._generate_reports(payload)

            if result["violations"]:
                for violation in result["violations"]:
                    logger.warning(f"Invariant violation: {violation}")
            result["success"] = not (self.self_check and result["violations"])
            logger.info(f"Experiment {self.experiment} finished in {format_duration(duration)}")
            return result

        except Exception as e:
            logger.error(f"Experiment execution failed: {e}", exc_info=True)
            result["error"] = str(e)
            return result

    def _dispatch(self) -> Dict[str, Callable[[], Dict[str, Any]]]:
        return {
            "montecarlo": self._run_montecarlo,
            "p_sweep": self._run_p_sweep,
            "mitm": self._run_mitm,
            "gps_spoof": self._run_gps_spoof,
            "fixed_vs_roving": self._run_fixed_vs_roving,
            "decoder_equivalence": self._run_decoder_equivalence,
        }

    def _trial_overrides(self) -> Dict[str, Any]:
        return {"trials_per_point": int(self.trials)} if self.trials else {}

    def _run_montecarlo(self) -> Dict[str, Any]:
        from secest.runners.montecarlo import ExperimentConfig, check_table_invariants, run_montecarlo

        sources = self.sources or self.config.get("montecarlo", {}).get("sources", [])
        tolerance = float(self.config.get("montecarlo", {}).get("ordering_tolerance", 0.07))
        tables = {}
        for source in sources:
            cfg = ExperimentConfig.from_config(self.config, source, **self._trial_overrides())
            tables[source] = run_montecarlo(cfg)

        return {
            "summary": {
                "experiment": "montecarlo",
                "sources": {s: t.to_dict() for s, t in tables.items()},
            },
            "tables": {f"success_{s}": t.frame for s, t in tables.items()},
            "violations": check_table_invariants(tables, tolerance=tolerance),
        }

    def _run_p_sweep(self) -> Dict[str, Any]:
        from secest.runners.montecarlo import ExperimentConfig, check_table_invariants, run_p_sweep

        sources = self.sources or self.config.get("montecarlo", {}).get("sources", [])
        summary: Dict[str, Any] = {"experiment": "p_sweep", "p_values": self.p_values, "sources": {}}
        tables: Dict[str, pd.DataFrame] = {}
        violations: List[str] = []
        for source in sources:
            cfg = ExperimentConfig.from_config(self.config, source, **self._trial_overrides())
            sweep = run_p_sweep(cfg, self.p_values)
            summary["sources"][source] = {p: t.to_dict() for p, t in sweep.items()}
            for p, table in sweep.items():
                tables[f"success_{source}_p{p}"] = table.frame
            violations += check_table_invariants({f"{source}_p{p}": t for p, t in sweep.items()},
                                                 ordering=())
            means = [float(sweep[p].success_rates.mean()) for p in sorted(sweep)]
            if any(b + 1e-9 < a for a, b in zip(means, means[1:])):
                violations.append(f"{source}: mean success rate decreases with p ({means})")
        return {"summary": summary, "tables": tables, "violations": violations}

    def _scenario_config(self):
        from secest.scenarios.uav import UavScenarioConfig

        overrides = {"n_y": int(self.n_y)} if self.n_y else {}
        return UavScenarioConfig.from_config(self.config, **overrides)

    def _scenario_payload(self, result) -> Dict[str, Any]:
        if "csv" in self.report_formats:
            result.export(str(self.results_dir))
        rmse = pd.DataFrame([{"method": m, **result.rmse[m],
                              **{f"tracking_{k}": v for k, v in result.tracking_rmse[m].items()}}
                             for m in sorted(result.rmse)])
        return {"summary": result.summary(), "tables": {"rmse": rmse}}

    def _run_mitm(self) -> Dict[str, Any]:
        from secest.scenarios.uav import run_mitm
        return self._scenario_payload(run_mitm(self._scenario_config()))

    def _run_gps_spoof(self) -> Dict[str, Any]:
        from secest.scenarios.uav import run_gps_spoof
        return self._scenario_payload(run_gps_spoof(self._scenario_config()))

    def _run_fixed_vs_roving(self) -> Dict[str, Any]:
        from secest.runners.montecarlo import run_fixed_vs_roving_demo

        seed = int(self.config.get("execution", {}).get("seed", 0))
        report = run_fixed_vs_roving_demo(seed=seed)
        violations = []
        if not report["cycling"]["l1_decoder"]["success"]:
            violations.append("l1 decoder failed on the cycling attack")
        if not report["fixed"]["row_support_decoder"]["success"]:
            violations.append("row-support decoder failed on the fixed-support attack")
        return {"summary": {"experiment": "fixed_vs_roving", **report}, "tables": {}, "violations": violations}

    def _run_decoder_equivalence(self) -> Dict[str, Any]:
        from secest.runners.montecarlo import run_decoder_equivalence

        seed = int(self.config.get("execution", {}).get("seed", 0))
        report = run_decoder_equivalence(trials=int(self.trials or 100), seed=seed)
        violations = [f"decoders disagree on trial {t}" for t in report["violations"]]
        return {"summary": {"experiment": "decoder_equivalence", **report}, "tables": {},
                "violations": violations}

    def _generate_reports(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        """Write JSON summary, CSV tables and a Markdown overview"""
        generator = ReportGenerator(str(self.results_dir))
        written: List[str] = []
        summary = dict(payload["summary"])
        summary["violations"] = payload.get("violations", [])
        summary["config"] = self.config

        if "json" in self.report_formats:
            written.append(generator.write_json(summary, "summary.json"))
        if "csv" in self.report_formats:
            for name, table in payload.get("tables", {}).items():
                written.append(generator.write_table_csv(table, f"{name}.csv"))

        overview = {key: value for key, value in payload["summary"].items()
                    if not isinstance(value, (dict, list))}
        sections: Dict[str, Any] = {"Overview": overview}
        if payload.get("violations"):
            sections["Invariant violations"] = "\n".join(f"- {v}" for v in payload["violations"])
        written.append(generator.write_markdown_summary(
            f"secest {self.experiment} run {self.timestamp}", sections, payload.get("tables")))
        logger.info(f"Wrote {len(written)} report files to {self.results_dir}")
        return {"files": written, "reports_dir": str(self.results_dir)}
