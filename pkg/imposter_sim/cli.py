#!/usr/bin/env python3
"""
Imposter Simulation CLI Tool
Command-line access to every stage of the simulated attack pipeline.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .cache import ProfileCache
from .dedup import FrameStore, VpsInstance, dedup_time
from .errors import ConfigError, ImposterSimError, InfeasiblePlacementError
from .estimator import PAGE_SIZE, Belief, EstimatorConfig, FrequencyTables, ImposterEstimator, fit
from .harness import (
    ADVERSARIAL,
    OBSERVED_CELL,
    AttackHarness,
    AttackReport,
    AttackScenario,
    SweepGrid,
    TargetSpec,
    write_reports_csv,
)
from .ics_model import HistorianLog, StateSpaceModel, build_warehouse_model, random_model, simulate
from .page_synth import (
    ProtocolProfile,
    apply_signature_defense,
    bruteforce_cost,
    entropy_bits,
    layout_from_model,
    synthesize_page,
    tag_values,
)
from .utils import format_duration, format_report, setup_logging

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_CONFIG = 3


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Expected comma-separated integers, got {text!r}") from e


def _read_json(path: Path) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"File not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e}") from e


def _write_json(path: Path, data: Any) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
    return path


class ImposterCLI:
    """Command-line interface for the attack simulator."""

    def __init__(self, out_dir: Path, cache_dir: Optional[Path] = None):
        self.out_dir = out_dir
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.harness = AttackHarness(ProfileCache(cache_dir))

    def load_scenario(self, config: Optional[str], seed: Optional[int]) -> AttackScenario:
        data = _read_json(Path(config)) if config else {}
        if not isinstance(data, dict):
            raise ConfigError("Scenario file must hold a JSON object")
        scenario = AttackScenario.from_dict(data)
        return scenario.with_seed(seed) if seed is not None else scenario

    def load_model(self, path: Optional[str], seed: int) -> StateSpaceModel:
        if path:
            return StateSpaceModel.from_dict(_read_json(Path(path)))
        return build_warehouse_model(seed).model

    def gen_model(
        self, seed: int, states: Optional[List[int]], meas: List[int], noise: float
    ) -> Path:
        if states:
            model = random_model(seed, states, meas, state_noise=noise, meas_noise=noise)
        else:
            model = build_warehouse_model(seed, noise).model
        path = self.out_dir / "model.json"
        path.write_text(model.to_json(), encoding="utf-8")
        print(f"Model with M={model.M}, P={model.P} written to {path}")
        return path

    def simulate(self, model: StateSpaceModel, seed: int, steps: int) -> Path:
        rng = np.random.default_rng(seed)
        log = simulate(model, rng.integers(0, model.state_sizes), steps, rng)
        path = self.out_dir / "log.json"
        path.write_text(log.to_json(), encoding="utf-8")
        log.to_csv(self.out_dir / "log.csv")
        print(f"Simulated {len(log)} records into {path}")
        return path

    def fit(self, model: StateSpaceModel, log_path: str, alpha: float) -> Path:
        log = HistorianLog.from_dict(_read_json(Path(log_path)), model)
        tables = fit(log, alpha)
        path = self.out_dir / "tables.json"
        path.write_text(tables.to_json(), encoding="utf-8")
        print(
            f"Fitted {tables.M} transition and {tables.P} emission tables "
            f"from {len(log)} records"
        )
        return path

    def estimate(
        self, model: StateSpaceModel, tables_path: str, log_path: str, config: EstimatorConfig
    ) -> Path:
        tables = FrequencyTables.from_dict(_read_json(Path(tables_path)))
        log = HistorianLog.from_dict(_read_json(Path(log_path)), model)
        last = log.record(len(log))
        result = ImposterEstimator(tables, config).estimate(
            Belief.one_hot(last.x, log.state_sizes), last_measurements=last.y
        )
        path = _write_json(self.out_dir / "estimate.json", result.to_dict())
        result.to_csv(self.out_dir / "estimate.csv", model)
        print(f"Estimated k={last.k + 1}: mean posterior {result.mean_posterior():.4f}, "
              f"{len(result.rejected)} measurement(s) rejected")
        return path

    def synth_page(
        self, model: StateSpaceModel, estimate_path: str, protocol: str, seed: int, signature: bool
    ) -> Path:
        estimate = _read_json(Path(estimate_path))
        layout = layout_from_model(model, ProtocolProfile.for_variant(protocol), seed=seed)
        if signature:
            layout = apply_signature_defense(layout, np.random.default_rng(seed))
        image = synthesize_page(layout, tag_values(layout, estimate["x_hat"], estimate["y_index"]))
        path = image.write(self.out_dir / f"{layout.profile.dll_name}.page")
        (self.out_dir / "layout.json").write_text(layout.to_json(), encoding="utf-8")
        cost = bruteforce_cost(layout)
        print(f"Wrote {image.page_count} page(s) to {path}")
        print(f"  Entropy: {entropy_bits(layout):.1f} bits")
        print(f"  Brute force: {cost.pages} pages in {cost.attempts} attempt(s)")
        return path

    def dedup(self, scenario: AttackScenario, pages: int, duplicates: float, passes: int) -> Path:
        """Seeded store where a fraction of every VPS's pages duplicate a shared pool."""
        rng = np.random.default_rng(scenario.model_seed)
        pool = [rng.bytes(PAGE_SIZE) for _ in range(max(1, pages // 4))]
        store = FrameStore(scenario.scan, enabled=scenario.ksm_enabled)
        memory_pages = scenario.vps_memory_bytes // PAGE_SIZE
        for n in range(scenario.vps_count + 1):
            contents: Dict[int, bytes] = {}
            for i in range(pages):
                shared = rng.random() < duplicates
                contents[i] = pool[int(rng.integers(len(pool)))] if shared else rng.bytes(PAGE_SIZE)
            store.register_vps(VpsInstance(f"vps-{n}", memory_pages, contents))
        ticks = 0
        while store.full_scans < passes and store.frames:
            if not store.enabled and ticks >= passes:
                break
            store.scan_tick()
            ticks += 1
        path = store.write_events(self.out_dir / "dedup_events.jsonl")
        _write_json(self.out_dir / "dedup_snapshot.json", store.snapshot())
        minutes = dedup_time(scenario.vps_memory_bytes, scenario.scan, scenario.vps_count)
        print(f"Dedup stats after {store.clock_ms} ms: {store.stats()}")
        print(f"Calibrated dedup time for {scenario.vps_count} VPS(s): {minutes:.1f} min")
        return path

    def profile(self, scenario: AttackScenario) -> Path:
        planted = list(scenario.dram.planted_cells) + [OBSERVED_CELL]
        result = self.harness.profile_dram(scenario, planted)
        path = _write_json(self.out_dir / "profile.json", result.to_dict())
        print(f"Profiled {result.rows_hammered} rows: {len(result.entries)} flippable bit(s), "
              f"{format_duration(result.elapsed)} simulated")
        return path

    def attack(self, scenario: AttackScenario) -> AttackReport:
        report = self.harness.run_end_to_end(scenario)
        _write_json(self.out_dir / "report.json", report.to_dict())
        write_reports_csv([report], self.out_dir / "report.csv")
        table = self.harness.compare_bruteforce(scenario, report)
        _write_json(self.out_dir / "bruteforce.json", table)
        return report

    def sweep(self, scenario: AttackScenario, grid: SweepGrid) -> Dict[str, Path]:
        return self.harness.sweep_figures(scenario, grid, self.out_dir)


def _print_attack(report: AttackReport) -> None:
    print("\nAttack Summary:")
    print(
        f"  Estimation accuracy: states {report.state_accuracy:.2%}, "
        f"measurements {report.meas_accuracy:.2%}"
    )
    print(f"  Guessed pages: {report.candidate_pages} ({report.guessed_page_bytes // 1024} KB)")
    print(f"  Merge detected: {'yes' if report.merge_detected else 'no'}")
    print(f"  Flips applied: {report.flips_applied}")
    print(f"  Consequence: {report.consequence}")
    print(f"  Total attack time: {format_duration(report.total_seconds)}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='JSON scenario file')
    common.add_argument('--seed', type=int, help='Seed for the plant model and the DRAM')
    common.add_argument('--out', type=str, default='.', help='Output directory (default: .)')
    common.add_argument('--cache-dir', type=str, help='Directory for cached DRAM profiles')
    common.add_argument('--verbose', '-v', action='store_true', help='Enable verbose output')

    parser = argparse.ArgumentParser(
        description='Imposter Simulator - estimation-driven page deduplication '
                    'and Rowhammer simulation'
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-model', parents=[common], help='Build a plant model')
    p.add_argument('--states', type=_int_list, help='State domain sizes for a random model')
    p.add_argument('--meas', type=_int_list, default=[],
                   help='Measurement domain sizes for a random model')
    p.add_argument('--noise', type=float, default=0.02, help='Process and measurement noise')

    p = sub.add_parser('simulate', parents=[common], help='Simulate a historian log')
    p.add_argument('--model', type=str, help='Model JSON (default: warehouse model)')
    p.add_argument('--steps', type=int, default=1000, help='Number of records')

    p = sub.add_parser('fit', parents=[common], help='Fit frequency tables from a log')
    p.add_argument('--model', type=str, help='Model JSON (default: warehouse model)')
    p.add_argument('--log', type=str, required=True, help='Historian log JSON')
    p.add_argument('--alpha', type=float, default=1.0, help='Additive smoothing')

    p = sub.add_parser('estimate', parents=[common],
                       help='Estimate the next state and measurements')
    p.add_argument('--model', type=str, help='Model JSON (default: warehouse model)')
    p.add_argument('--tables', type=str, required=True, help='Frequency tables JSON')
    p.add_argument('--log', type=str, required=True,
                   help='Historian log JSON; its last record is k-1')
    p.add_argument('--mode', choices=['univariate', 'multivariate'], default='multivariate')
    p.add_argument('--cutoff', type=float, default=0.5,
                   help='Acceptance cutoff for measurement posteriors')

    p = sub.add_parser('synth-page', parents=[common],
                       help='Synthesize a .bss page from an estimate')
    p.add_argument('--model', type=str, help='Model JSON (default: warehouse model)')
    p.add_argument('--estimate', type=str, required=True, help='Estimate JSON')
    p.add_argument('--protocol', type=str, default='Mosquitto', help='Protocol variant')
    p.add_argument('--signature', action='store_true', help='Add a random 64-bit signature tag')

    p = sub.add_parser('dedup', parents=[common], help='Run the KSM scanner on seeded VPS memory')
    p.add_argument('--pages', type=int, default=64, help='Touched pages per VPS')
    p.add_argument('--duplicates', type=float, default=0.5,
                   help='Fraction of pages drawn from a shared pool')
    p.add_argument('--passes', type=int, default=2, help='Full scan passes')

    sub.add_parser('profile', parents=[common], help='Profile the DRAM block for flippable bits')

    p = sub.add_parser('attack', parents=[common], help='Run the end-to-end attack')
    p.add_argument('--target-tag', type=str, help='Tag for an adversarial flip')
    p.add_argument('--target-bit', type=int, help='Bit of the tag to flip')
    p.add_argument('--direction', choices=['one-to-zero', 'zero-to-one'], default='one-to-zero')
    p.add_argument('--plant-target-cell', action='store_true',
                   help='Plant a vulnerable cell under the target bit before profiling')

    p = sub.add_parser('sweep', parents=[common],
                       help='Write the profiling, dedup and protocol datasets')
    p.add_argument('--protocols', type=str, help='Comma-separated protocol variants (default: all)')
    p.add_argument('--vps-counts', type=_int_list, default=[1, 3, 6])
    p.add_argument('--locations', type=_int_list, default=[5000, 10000, 15000, 20000])

    p = sub.add_parser('report', parents=[common], help='Render saved reports as Markdown')
    p.add_argument('inputs', nargs='+', help='report.json files')
    return parser


def run(args: argparse.Namespace) -> int:
    cli = ImposterCLI(Path(args.out), Path(args.cache_dir) if args.cache_dir else None)
    seed = args.seed if args.seed is not None else 42

    if args.command == 'gen-model':
        cli.gen_model(seed, args.states, args.meas, args.noise)
    elif args.command == 'simulate':
        cli.simulate(cli.load_model(args.model, seed), seed, args.steps)
    elif args.command == 'fit':
        cli.fit(cli.load_model(args.model, seed), args.log, args.alpha)
    elif args.command == 'estimate':
        config = EstimatorConfig(cutoff=args.cutoff, mode=args.mode)
        cli.estimate(cli.load_model(args.model, seed), args.tables, args.log, config)
    elif args.command == 'synth-page':
        model = cli.load_model(args.model, seed)
        cli.synth_page(model, args.estimate, args.protocol, seed, args.signature)
    elif args.command == 'dedup':
        scenario = cli.load_scenario(args.config, args.seed)
        cli.dedup(scenario, args.pages, args.duplicates, args.passes)
    elif args.command == 'profile':
        cli.profile(cli.load_scenario(args.config, args.seed))
    elif args.command == 'attack':
        scenario = cli.load_scenario(args.config, args.seed)
        if args.target_tag is not None:
            target = TargetSpec(ADVERSARIAL, args.target_tag, args.target_bit, args.direction)
            scenario = AttackScenario.from_dict({**scenario.to_dict(), 'target': target.to_dict()})
        if args.plant_target_cell:
            scenario = AttackScenario.from_dict({**scenario.to_dict(), 'plant_target_cell': True})
        _print_attack(cli.attack(scenario))
    elif args.command == 'sweep':
        grid = SweepGrid(
            protocols=args.protocols.split(',') if args.protocols else SweepGrid().protocols,
            vps_counts=args.vps_counts,
            locations=args.locations,
        )
        for name, path in cli.sweep(cli.load_scenario(args.config, args.seed), grid).items():
            print(f"  {name}: {path}")
    elif args.command == 'report':
        reports = [_read_json(Path(p)) for p in args.inputs]
        markdown = format_report(reports)
        path = Path(args.out) / 'report.md'
        path.write_text(markdown, encoding='utf-8')
        print(markdown)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(verbose=args.verbose)
    try:
        return run(args)
    except InfeasiblePlacementError as e:
        logging.error(f"Infeasible placement: {e}")
        return EXIT_INFEASIBLE
    except ConfigError as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except ImposterSimError as e:
        logging.error(f"Error: {e}")
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
