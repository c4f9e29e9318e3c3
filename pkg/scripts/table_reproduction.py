"""Regenerate the published design and simulation tables and diff them
against the reference values shipped under data/reference/.

Table 1 comes from the sizing functions (plus simulated PCS on request),
Tables 2-4 from the trial simulator, and Tables 5-6 are summaries of the
Table 3 and Table 4 outputs.
"""
import logging
import math
import os

import numpy as np
import pandas as pd

from design_sizer import DesignScenario, optimal_design_approx, optimal_design_exact, rose_design, rose_scenario
from outcome_model import UtilitySpec
from run_manifest import RunManifest, config_hash
from trial_sim import DEFAULT_REPLICATIONS, SimConfig, TteSettings, default_workers, empirical_pcs, run_study

logger = logging.getLogger(__name__)

REFERENCE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, "data", "reference")
NOMINAL_ALPHA = 0.025
MIN_EXACT_MATCHES = 44
KEY_DECIMALS = 6

# Table 1 grid, in published row order
T1_ALPHAS = (0.7, 0.8)
T1_PS = (0.3, 0.5)
T1_DELTAS = (0.10, 0.15)
T1_QS = (0.5, 0.7)
T1_PHIS = (-0.2, 0.0, 0.2)
T1_D = 0.15

# Null simulation grid shared by Tables 2-4
NULL_PHIS = (0.0, -0.3)
NULL_PS = (0.3, 0.4, 0.5)
NULL_N1S = (40, 60, 80, 100)
NULL_N_TOTAL = 200
NULL_Q = 0.8
NULL_UTILITIES = UtilitySpec(1.0, 0.8, 0.2, 0.0)
TTE_RHOS = (0.7, 0.3, 0.0)

TABLE_KEYS = {
    1: ['alpha', 'p', 'q', 'delta', 'd', 'phi'],
    2: ['p', 'phi', 'n1', 'n_total'],
    3: ['p', 'phi', 'n1', 'n_total'],
    4: ['p', 'rho_c', 'n1', 'n_total'],
    5: ['test'],
    6: ['test', 'rho_c'],
}

PCS_TOLERANCE = 0.003
# Compared and reported, but a miss does not fail the table. The published
# phi_hat is attenuated toward 0 relative to the pooled estimate.
INFORMATIONAL_COLUMNS = {2: ("phi_hat",)}

BASE_TOLERANCES = {
    1: {'UtilApprox_n': 0, 'ROSEApprox_n': 0, 'UtilExact_n': 1, 'ROSEExact_n': 1},
    2: {'Observed': 0.0006, 'Est': 0.001, 'Est_max': 0.001, 'phi_hat': 0.002},
    3: {'Z_Observed': 0.0015, 'Z_Est': 0.001, 'Z_Est_max': 0.001,
        'Binomial_Observed': 0.0015, 'Binomial_Est': 0.001, 'Binomial_Est_max': 0.001},
    4: {'Landmark_Obs': 0.002, 'Landmark_Est': 0.0015, 'Exp_Obs': 0.002, 'Exp_Est': 0.0015,
        'LR_Obs': 0.002, 'LR_Est': 0.0015, 'Cox_Obs': 0.002, 'Cox_Est': 0.0015},
    5: {'mean_observed': 0.0015, 'mean_estimate': 0.001, 'mean_overestimation': 0.0015,
        'inflation_factor': 0.05, 'conservative_rate': 0.05},
    6: {'mean_observed': 0.002, 'factor': 0.05},
}
RHO_TX_TOLERANCE = 0.02

TABLE_TITLES = {
    1: "SAMPLE SIZE: APPROXIMATE VS EXACT, UTILITY VS ROSE",
    2: "SELECTION-INDUCED BIAS UNDER THE NULL",
    3: "TYPE I ERROR: Z-TEST VS BINOMIAL TEST",
    4: "TYPE I ERROR FOR TIME-TO-EVENT ENDPOINTS",
    5: "SUMMARY OF Z-TEST AND BINOMIAL TEST",
    6: "SUMMARY OF TIME-TO-EVENT INFLATION BY CORRELATION",
}


def load_reference(table, reference_dir=REFERENCE_DIR):
    path = os.path.join(reference_dir, f"table{table}.csv")
    return pd.read_csv(path, comment='#')


def table1_scenarios():
    return [
        DesignScenario(p=p, q=q, delta=delta, d=T1_D, phi=phi, alpha_L=alpha, alpha_H=alpha)
        for alpha in T1_ALPHAS
        for p in T1_PS
        for delta in T1_DELTAS
        for q in T1_QS
        for phi in T1_PHIS
    ]


def null_grid(phis=NULL_PHIS):
    return [(p, phi, n1) for phi in phis for p in NULL_PS for n1 in NULL_N1S]


def null_config(p, phi, n1, replications, seed, tte=None):
    if tte is None:
        sid = f"null_p{p}_phi{phi}_n{n1}"
        tte = TteSettings()
    else:
        sid = f"tte_p{p}_rho{tte.rho_c}_n{n1}"
    return SimConfig(scenario_id=sid, p_L=p, p_H=p, q_L=NULL_Q, q_H=NULL_Q, n1=n1, n2=NULL_N_TOTAL - n1,
                     phi=phi, utilities=NULL_UTILITIES, replications=replications, seed=seed, tte=tte)


def _round_keys(df, keys):
    df = df.copy()
    for key in keys:
        if pd.api.types.is_float_dtype(df[key]):
            df[key] = df[key].round(KEY_DECIMALS)
    return df


def diff_table(result, reference, keys, tolerances, tolerance_for=None):
    """One row per compared cell with the reproduced value, reference value and verdict.

    The tolerance of a cell is the larger of its base tolerance and three
    Monte Carlo standard errors when the result carries an mc_se_<column>.
    """
    merged = _round_keys(reference, keys).merge(_round_keys(result, keys), on=keys, how='left',
                                                suffixes=('_ref', ''))
    columns = [c for c in tolerances if c in reference.columns and c in result.columns]
    rows = []
    for _, row in merged.iterrows():
        for column in columns:
            expected = row[f"{column}_ref"]
            if pd.isna(expected):
                continue
            actual = row[column]
            base = tolerances[column]
            if tolerance_for is not None:
                base = tolerance_for(row, column, base)
            se = row.get(f"mc_se_{column}", np.nan)
            tolerance = max(base, 3.0 * se) if pd.notna(se) else base
            difference = abs(actual - expected) if pd.notna(actual) else np.nan
            rows.append({
                **{k: row[k] for k in keys},
                'column': column,
                'reproduced': actual,
                'reference': expected,
                'abs_diff': difference,
                'tolerance': tolerance,
                'within': bool(pd.notna(difference) and difference <= tolerance + 1e-12),
            })
    return pd.DataFrame(rows, columns=keys + ['column', 'reproduced', 'reference', 'abs_diff', 'tolerance', 'within'])


def exact_n_matches(diff):
    exact = diff[diff['column'] == 'UtilExact_n']
    return int((exact['abs_diff'] == 0).sum())


def _design_columns(prefix, res):
    return {f"{prefix}_n": res.n, f"{prefix}_lambda_u": res.lambda_u,
           f"{prefix}_model_PCS_L": res.pcs_L, f"{prefix}_model_PCS_H": res.pcs_H}


def _pcs_columns(prefix, scenario, res, replications, seed, workers):
    pcs_L, pcs_H = empirical_pcs(scenario, res.n, res.lambda_u, replications, seed, workers=workers)
    return {
        f"{prefix}_PCS_L": pcs_L,
        f"{prefix}_PCS_H": pcs_H,
        f"mc_se_{prefix}_PCS_L": math.sqrt(pcs_L * (1.0 - pcs_L) / replications),
        f"mc_se_{prefix}_PCS_H": math.sqrt(pcs_H * (1.0 - pcs_H) / replications),
    }


def table2_frame(summaries):
    rows = []
    for (p, phi, n1), s in summaries.items():
        rows.append({
            'p': p, 'phi': phi, 'n1': n1, 'n_total': NULL_N_TOTAL,
            'Observed': s.observed_bias, 'Est': s.est_bias, 'Est_max': s.est_max_bias, 'phi_hat': s.phi_hat,
            'mc_se_Observed': s.mc_se['observed_bias'],
            'mc_se_Est': s.mc_se['est_bias'],
            'mc_se_Est_max': s.mc_se['est_max_bias'],
        })
    return pd.DataFrame(rows)


def table3_frame(summaries):
    rows = []
    for (p, phi, n1), s in summaries.items():
        rows.append({
            'p': p, 'phi': phi, 'n1': n1, 'n_total': NULL_N_TOTAL,
            'Z_Observed': s.z_observed, 'Z_Est': s.z_est, 'Z_Est_max': s.z_est_max,
            'Binomial_Observed': s.binom_observed, 'Binomial_Est': s.binom_est,
            'Binomial_Est_max': s.binom_est_max, 'binomial_critical': s.binom_critical,
            'mc_se_Z_Observed': s.mc_se['z_observed'],
            'mc_se_Binomial_Observed': s.mc_se['binom_observed'],
        })
    return pd.DataFrame(rows)


def table4_frame(summaries):
    rows = []
    for (p, rho, n1), s in summaries.items():
        rows.append({
            'p': p, 'rho_c': rho, 'n1': n1, 'n_total': NULL_N_TOTAL,
            'Landmark_Obs': s.landmark_observed, 'Landmark_Est': s.landmark_est,
            'Exp_Obs': s.exp_observed, 'Exp_Est': s.exp_est,
            'LR_Obs': s.logrank_observed, 'LR_Est': s.logrank_est,
            'Cox_Obs': s.cox_observed, 'Cox_Est': s.cox_est,
            'Z_Observed': s.z_observed, 'Binomial_Observed': s.binom_observed,
            'rho_tx': s.rho_tx, 'indeterminate_exp': s.indeterminate_exp,
            'mc_se_Landmark_Obs': s.mc_se['landmark_observed'],
            'mc_se_Exp_Obs': s.mc_se['exp_observed'],
            'mc_se_LR_Obs': s.mc_se['logrank_observed'],
            'mc_se_Cox_Obs': s.mc_se['cox_observed'],
        })
    return pd.DataFrame(rows)


def summarize_binary_tests(table3, alpha=NOMINAL_ALPHA):
    """Across-scenario means, inflation factors and plugin conservatism for the Z and binomial tests"""
    rows = []
    for test, prefix in (('z', 'Z'), ('binomial', 'Binomial')):
        observed = table3[f"{prefix}_Observed"]
        estimate = table3[f"{prefix}_Est"]
        rows.append({
            'test': test,
            'mean_observed': observed.mean(),
            'mean_estimate': estimate.mean(),
            'mean_overestimation': (estimate - observed).mean(),
            'inflation_factor': observed.mean() / alpha,
            'conservative_rate': (estimate >= observed).mean(),
        })
    return pd.DataFrame(rows)


def summarize_tte_tests(table4, alpha=NOMINAL_ALPHA):
    """Mean observed Type I error and inflation factor per copula correlation, binary tests as references"""
    columns = (('z', 'Z_Observed'), ('binomial', 'Binomial_Observed'), ('landmark', 'Landmark_Obs'),
               ('exponential', 'Exp_Obs'), ('logrank', 'LR_Obs'), ('cox', 'Cox_Obs'))
    rows = []
    for test, column in columns:
        for rho, group in table4.groupby('rho_c', sort=False):
            mean = group[column].mean()
            rows.append({'test': test, 'rho_c': rho, 'mean_observed': mean, 'factor': mean / alpha})
    for rho, group in table4.groupby('rho_c', sort=False):
        rows.append({'test': 'rho_tx', 'rho_c': rho, 'mean_observed': group['rho_tx'].mean(), 'factor': np.nan})
    return pd.DataFrame(rows)


def _rho_tx_tolerance(row, column, base):
    return RHO_TX_TOLERANCE if row['test'] == 'rho_tx' else base


class TableReproducer:
    def __init__(self, output_dir="data/results", replications=DEFAULT_REPLICATIONS, seed=2024, workers=None,
                 method="both", pcs=False, reference_dir=REFERENCE_DIR):
        self.output_dir = output_dir
        self.replications = replications
        self.seed = seed
        self.workers = workers or default_workers()
        self.method = method
        self.pcs = pcs
        self.reference_dir = reference_dir

        os.makedirs(output_dir, exist_ok=True)

        self._null = None
        self._tte = None
        self.scenario_status = {}

    def _simulate(self, grid, tte_for=None):
        summaries = {}
        for key in grid:
            p, second, n1 = key
            if tte_for is None:
                config = null_config(p, second, n1, self.replications, self.seed)
            else:
                config = null_config(p, 0.0, n1, self.replications, self.seed, tte=tte_for(second))
            summaries[key] = run_study(config, workers=self.workers)
            self.scenario_status[config.scenario_id] = "ok"
        return summaries

    def null_summaries(self):
        if self._null is None:
            self._null = self._simulate(null_grid())
        return self._null

    def tte_summaries(self):
        if self._tte is None:
            grid = [(p, rho, n1) for rho in TTE_RHOS for p in NULL_PS for n1 in NULL_N1S]
            self._tte = self._simulate(grid, tte_for=lambda rho: TteSettings(enabled=True, rho_c=rho))
        return self._tte

    def table1(self):
        methods = ("approx", "exact") if self.method == "both" else (self.method,)
        rose_cache = {}
        rows = []
        for s in table1_scenarios():
            row = {'alpha': s.alpha_L, 'p': s.p, 'q': s.q, 'delta': s.delta, 'd': s.d, 'phi': s.phi}
            rose = rose_scenario(s.p, s.delta, s.alpha_L)
            for method in methods:
                label = "Approx" if method == "approx" else "Exact"
                util = (optimal_design_approx(s) if method == "approx"
                        else optimal_design_exact(s, workers=self.workers))
                cache_key = (method, s.alpha_L, s.p, s.delta)
                if cache_key not in rose_cache:
                    rose_cache[cache_key] = rose_design(s.p, s.delta, s.alpha_L, method=method, workers=self.workers)
                rose_res = rose_cache[cache_key]

                row.update(_design_columns(f"Util{label}", util))
                row.update(_design_columns(f"ROSE{label}", rose_res))
                if self.pcs:
                    row.update(_pcs_columns(f"Util{label}", s, util, self.replications, self.seed, self.workers))
                    row.update(_pcs_columns(f"ROSE{label}", rose, rose_res, self.replications, self.seed,
                                            self.workers))
            rows.append(row)
            self.scenario_status[f"design_a{s.alpha_L}_p{s.p}_q{s.q}_d{s.delta}_phi{s.phi}"] = "ok"
        return pd.DataFrame(rows)

    def tolerances(self, table):
        tolerances = dict(BASE_TOLERANCES[table])
        if table == 1 and self.pcs:
            for prefix in ("UtilApprox", "UtilExact", "ROSEApprox", "ROSEExact"):
                tolerances[f"{prefix}_PCS_L"] = PCS_TOLERANCE
                tolerances[f"{prefix}_PCS_H"] = PCS_TOLERANCE
        return tolerances

    def build(self, table):
        logger.info(f"Reproducing table {table}...")
        if table == 1:
            return self.table1()
        if table == 2:
            return table2_frame(self.null_summaries())
        if table == 3:
            return table3_frame(self.null_summaries())
        if table == 4:
            return table4_frame(self.tte_summaries())
        if table == 5:
            return summarize_binary_tests(table3_frame(self.null_summaries()))
        if table == 6:
            return summarize_tte_tests(table4_frame(self.tte_summaries()))
        raise ValueError(f"Unknown table {table}; choose 1-6")

    def diff(self, table, result):
        tolerance_for = _rho_tx_tolerance if table == 6 else None
        diff = diff_table(result, load_reference(table, self.reference_dir), TABLE_KEYS[table],
                          self.tolerances(table), tolerance_for)
        diff["strict"] = ~diff["column"].isin(INFORMATIONAL_COLUMNS.get(table, ()))
        return diff

    def passed(self, table, diff):
        strict = diff[diff["strict"]] if "strict" in diff.columns else diff
        ok = bool(strict["within"].all()) if not strict.empty else True
        if table == 1 and (diff['column'] == 'UtilExact_n').any():
            ok = ok and exact_n_matches(diff) >= MIN_EXACT_MATCHES
        return ok

    def reproduce(self, table):
        """Build one table, diff it, save both CSVs and the manifest; returns (result, diff, passed)"""
        result = self.build(table)
        diff = self.diff(table, result)
        passed = self.passed(table, diff)

        table_path = os.path.join(self.output_dir, f"table{table}.csv")
        diff_path = os.path.join(self.output_dir, f"table{table}_diff.csv")
        manifest_path = os.path.join(self.output_dir, f"table{table}.manifest.json")
        result.to_csv(table_path, index=False)
        diff.to_csv(diff_path, index=False)

        settings = {'table': table, 'replications': self.replications, 'seed': self.seed,
                    'method': self.method, 'pcs': self.pcs}
        manifest = RunManifest(config_hash=config_hash(settings), seed=self.seed,
                               scenarios=dict(self.scenario_status),
                               outputs=[table_path, diff_path, manifest_path])
        manifest.write(manifest_path)
        logger.info(f"Table {table} saved to {table_path}")

        self.show_summary(table, result, diff, passed)
        return result, diff, passed

    def show_summary(self, table, result, diff, passed):
        print("\n" + "=" * 80)
        print(f"📋 TABLE {table}: {TABLE_TITLES[table]}")
        print("=" * 80)

        shown = [c for c in result.columns if not c.startswith('mc_se_')]
        print(result[shown].to_string(index=False))

        print(f"\n🔍 COMPARISON WITH REFERENCE VALUES")
        print("-" * 50)
        if diff.empty:
            print("  • No comparable cells")
        else:
            print(f"  • Cells compared: {len(diff)}")
            print(f"  • Within tolerance: {int(diff['within'].sum())}")
            print(f"  • Largest difference: {diff['abs_diff'].max():.5g}")
            if table == 1 and (diff['column'] == 'UtilExact_n').any():
                print(f"  • Exact n equal to reference: {exact_n_matches(diff)}/48")
            misses = diff[~diff["within"] & diff["strict"]]
            informational = diff[~diff["within"] & ~diff["strict"]]
            if not informational.empty:
                print(f"  • Informational cells outside tolerance: {len(informational)}")
            if not misses.empty:
                print("\n❌ OUTSIDE TOLERANCE:")
                print(misses.to_string(index=False))
        print(f"\n{'✅' if passed else '❌'} Table {table} {'matches' if passed else 'differs from'} the reference")
