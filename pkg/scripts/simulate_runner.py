"""Config-file driven batch of trial simulations.

A config is a JSON object with an optional ``defaults`` object merged
into every entry of a ``scenarios`` list, e.g.::

    {
      "defaults": {"q": 0.8, "n_total": 200, "utilities": [1, 0.8, 0.2, 0],
                   "replications": 100000, "seed": 2024},
      "scenarios": [
        {"id": "p0.4_n60", "p": 0.4, "phi": 0.0, "n1": 60},
        {"id": "tte_p0.4", "p": 0.4, "n1": 60, "tte": {"enabled": true, "rho_c": 0.7}}
      ]
    }
"""
import json
import logging
import os
from numbers import Number

import pandas as pd

from design_errors import ConfigError, DesignError, ResourceCapError
from outcome_model import RESPONSE_ONLY, UtilitySpec, utility_from_margins
from rng_streams import DEFAULT_BLOCK_SIZE
from run_manifest import RunManifest, config_hash
from trial_sim import (DEFAULT_REPLICATIONS, BinarySettings, SimConfig, TteSettings, default_workers,
                       run_study)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_CAP = 3

NUMBER_KEYS = {'p', 'q', 'p_L', 'p_H', 'q_L', 'q_H', 'phi', 'lambda_u'}
INT_KEYS = {'n1', 'n2', 'n_total', 'replications', 'seed', 'block_size'}
SCENARIO_KEYS = NUMBER_KEYS | INT_KEYS | {'id', 'utilities', 'margins', 'tte', 'binary', 'cov_time_events_only'}
TTE_KEYS = {'enabled', 'lambda0', 'rho_c', 't_entry', 't_admin', 'tau', 'control_size', 'alpha'}
BINARY_KEYS = {'p0', 'alpha'}

DESIGN_COLUMNS = ['scenario_id', 'p_L', 'p_H', 'q_L', 'q_H', 'phi', 'n1', 'n_total', 'lambda_u', 'rho_c']


def _is_number(value):
    return isinstance(value, Number) and not isinstance(value, bool)


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _check_block(name, block, allowed, where, problems):
    if not isinstance(block, dict):
        problems.append(f"{where}.{name}: expected an object")
        return
    for key, value in block.items():
        if key not in allowed:
            problems.append(f"{where}.{name}.{key}: unknown key")
        elif key == 'enabled':
            if not isinstance(value, bool):
                problems.append(f"{where}.{name}.{key}: expected true/false")
        elif value is not None and not _is_number(value):
            problems.append(f"{where}.{name}.{key}: expected a number")


def validate_config(raw):
    """Resolved scenario dicts; every schema problem is collected into one ConfigError"""
    problems = []
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected an object with a 'scenarios' list"])
    for key in raw:
        if key not in ('defaults', 'scenarios'):
            problems.append(f"{key}: unknown top-level key")

    defaults = raw.get('defaults', {})
    if not isinstance(defaults, dict):
        problems.append("defaults: expected an object")
        defaults = {}
    scenarios = raw.get('scenarios')
    if not isinstance(scenarios, list):
        problems.append("scenarios: missing or not a list")
        scenarios = []

    resolved = []
    seen = set()
    for i, entry in enumerate(scenarios):
        where = f"scenarios[{i}]"
        if not isinstance(entry, dict):
            problems.append(f"{where}: expected an object")
            continue
        merged = {**defaults, **entry}
        for block in ('tte', 'binary'):
            if isinstance(defaults.get(block), dict) and isinstance(entry.get(block), dict):
                merged[block] = {**defaults[block], **entry[block]}

        for key, value in merged.items():
            if key not in SCENARIO_KEYS:
                problems.append(f"{where}.{key}: unknown key")
            elif key in INT_KEYS and not _is_int(value):
                problems.append(f"{where}.{key}: expected an integer")
            elif key in NUMBER_KEYS and not _is_number(value):
                problems.append(f"{where}.{key}: expected a number")

        if 'id' not in merged:
            problems.append(f"{where}.id: missing")
        elif merged['id'] in seen:
            problems.append(f"{where}.id: duplicate scenario id {merged['id']!r}")
        else:
            seen.add(merged['id'])

        if 'n1' not in merged:
            problems.append(f"{where}.n1: missing")
        if 'n2' not in merged and 'n_total' not in merged:
            problems.append(f"{where}.n2: missing (or give n_total)")
        if 'p' not in merged and not ('p_L' in merged and 'p_H' in merged):
            problems.append(f"{where}.p: missing (or give p_L and p_H)")
        if 'q' not in merged and not ('q_L' in merged and 'q_H' in merged):
            problems.append(f"{where}.q: missing (or give q_L and q_H)")

        utilities = merged.get('utilities')
        if utilities is not None and (not isinstance(utilities, list) or len(utilities) != 4
                                      or not all(_is_number(v) for v in utilities)):
            problems.append(f"{where}.utilities: expected a list of four numbers")
        margins = merged.get('margins')
        if margins is not None:
            if utilities is not None:
                problems.append(f"{where}.margins: give either utilities or margins, not both")
            if not isinstance(margins, dict) or set(margins) != {'delta', 'd'}:
                problems.append(f"{where}.margins: expected an object with delta and d")
            elif not all(_is_number(v) for v in margins.values()):
                problems.append(f"{where}.margins: delta and d must be numbers")
        if 'tte' in merged:
            _check_block('tte', merged['tte'], TTE_KEYS, where, problems)
        if 'binary' in merged:
            _check_block('binary', merged['binary'], BINARY_KEYS, where, problems)
        if 'cov_time_events_only' in merged and not isinstance(merged['cov_time_events_only'], bool):
            problems.append(f"{where}.cov_time_events_only: expected true/false")
        resolved.append(merged)

    if problems:
        raise ConfigError(problems)
    return resolved


def _utilities(entry):
    if entry.get('utilities') is not None:
        return UtilitySpec(*[float(v) for v in entry['utilities']])
    if entry.get('margins') is not None:
        return utility_from_margins(entry['margins']['delta'], entry['margins']['d'])
    return RESPONSE_ONLY


def build_sim_config(entry, replications=None, seed=None) -> SimConfig:
    """SimConfig from one resolved scenario entry; command-line overrides win"""
    n1 = entry['n1']
    n2 = entry['n2'] if 'n2' in entry else entry['n_total'] - n1
    return SimConfig(
        scenario_id=str(entry['id']),
        p_L=entry.get('p_L', entry.get('p')),
        p_H=entry.get('p_H', entry.get('p')),
        q_L=entry.get('q_L', entry.get('q')),
        q_H=entry.get('q_H', entry.get('q')),
        n1=n1,
        n2=n2,
        phi=entry.get('phi', 0.0),
        utilities=_utilities(entry),
        lambda_u=entry.get('lambda_u', 0.0),
        replications=replications or entry.get('replications', DEFAULT_REPLICATIONS),
        seed=seed if seed is not None else entry.get('seed', 0),
        tte=TteSettings(**entry.get('tte', {})),
        binary=BinarySettings(**entry.get('binary', {})),
        block_size=entry.get('block_size', DEFAULT_BLOCK_SIZE),
        cov_time_events_only=entry.get('cov_time_events_only', False),
    )


def summary_row(config: SimConfig, summary):
    row = {
        'scenario_id': config.scenario_id,
        'p_L': config.p_L,
        'p_H': config.p_H,
        'q_L': config.q_L,
        'q_H': config.q_H,
        'phi': config.phi,
        'n1': config.n1,
        'n_total': config.n1 + config.n2,
        'lambda_u': config.lambda_u,
        'rho_c': config.tte.rho_c if config.tte.enabled else None,
    }
    row.update({k: v for k, v in summary.to_row().items() if k != 'scenario_id'})
    return row


class SimulationBatchRunner:
    def __init__(self, config_path, output_dir="data/results", workers=None, replications=None, seed=None):
        self.config_path = config_path
        self.output_dir = output_dir
        self.workers = workers or default_workers()
        self.replications = replications
        self.seed = seed

        os.makedirs(output_dir, exist_ok=True)

        self.stem = os.path.splitext(os.path.basename(config_path))[0]
        self.entries = []
        self.results_df = pd.DataFrame(columns=DESIGN_COLUMNS)
        self.manifest = None
        self.exit_code = EXIT_OK

    def load_config(self):
        """Read and validate the JSON config; raises ConfigError listing every problem"""
        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError([f"{self.config_path}: {e}"]) from e
        self.entries = validate_config(raw)

        resolved = {'scenarios': self.entries, 'replications': self.replications, 'seed': self.seed}
        self.manifest = RunManifest(config_hash=config_hash(resolved), seed=self.seed)
        logger.info(f"Loaded {len(self.entries)} scenarios from {self.config_path}")
        return self.entries

    def run_scenario(self, entry):
        config = build_sim_config(entry, self.replications, self.seed)
        summary = run_study(config, workers=self.workers)
        return summary_row(config, summary)

    def run_all(self):
        """Run every scenario; a failing one is logged and marked failed while the rest continue"""
        if self.manifest is None:
            self.load_config()
        rows = []
        for entry in self.entries:
            sid = str(entry['id'])
            logger.info(f"Simulating {sid}...")
            try:
                rows.append(self.run_scenario(entry))
                self.manifest.mark(sid, "ok")
            except ResourceCapError as e:
                logger.error(f"Scenario {sid} failed: {e}")
                self.manifest.mark(sid, "failed")
                self.exit_code = max(self.exit_code, EXIT_CAP)
            except DesignError as e:
                logger.error(f"Scenario {sid} failed: {e}")
                self.manifest.mark(sid, "failed")
                if self.exit_code == EXIT_OK:
                    self.exit_code = EXIT_DOMAIN

        if rows:
            self.results_df = pd.DataFrame(rows)
        self.save_results()
        self.show_summary()
        return self.exit_code

    def save_results(self):
        """CSV of scenario rows (header only when nothing ran) plus the manifest"""
        csv_path = os.path.join(self.output_dir, f"{self.stem}.csv")
        self.results_df.to_csv(csv_path, index=False)
        manifest_path = os.path.join(self.output_dir, f"{self.stem}.manifest.json")
        self.manifest.outputs = [csv_path, manifest_path]
        self.manifest.write(manifest_path)
        logger.info(f"Results saved to {csv_path}")
        return csv_path, manifest_path

    def show_summary(self):
        print("\n" + "=" * 60)
        print("🎲 SIMULATION BATCH SUMMARY")
        print("=" * 60)

        statuses = self.manifest.scenarios if self.manifest else {}
        print(f"📊 SCENARIOS: {len(statuses)}")
        print(f"  • Completed: {sum(1 for s in statuses.values() if s == 'ok')}")
        print(f"  • Failed: {len(self.manifest.failed) if self.manifest else 0}")

        if not self.results_df.empty:
            print(f"\n🎯 SELECTION AND TYPE I ERROR:")
            for _, row in self.results_df.iterrows():
                print(f"  • {row['scenario_id']}: bias {row['observed_bias']:.5f}, "
                      f"Z {row['z_observed']:.4f}, binomial {row['binom_observed']:.4f}")

        print(f"\n📁 FILES SAVED:")
        print(f"  • {os.path.join(self.output_dir, self.stem + '.csv')}")
        print(f"  • {os.path.join(self.output_dir, self.stem + '.manifest.json')}")


if __name__ == "__main__":
    import argparse

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    parser = argparse.ArgumentParser(description="Run a batch of two-stage trial simulations from a JSON config")
    parser.add_argument("config", help="path to the JSON scenario config")
    parser.add_argument("--out", default="data/results", help="output directory (default: data/results)")
    args = parser.parse_args()

    runner = SimulationBatchRunner(args.config, output_dir=args.out)
    try:
        raise SystemExit(runner.run_all())
    except ConfigError as e:
        logger.error(str(e))
        raise SystemExit(EXIT_DOMAIN)
