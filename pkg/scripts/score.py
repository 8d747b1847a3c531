import math

import pandas as pd

TARGET_SPEEDUP = 19.0


def normalize(value: float, best: float = 0.0, worst: float = 100.0) -> float:
    """
    Mapea `value` en el rango [best, worst] a un float en [1.0, 0.0].
    Vale también con best > worst (métricas donde más es mejor).
    """
    if math.isnan(value):
        return 0.0
    if best == worst:
        return 1.0 if value == best else 0.0
    frac = (value - best) / (worst - best)
    return round(min(max(1.0 - frac, 0.0), 1.0), 3)


def compute_dimensions(bench_df: pd.DataFrame, rules_df: pd.DataFrame = None) -> dict:
    """
    Devuelve un dict con dimensiones normalizadas [0–1]:
      - fidelidad:    1 con MSE 0, 0 con el peor MSE >= 1
      - aceleracion:  mejor speedup de la caché completa frente a TARGET_SPEEDUP
      - consistencia: avg(success) de las reglas (si se proporcionan)
    """
    worst_mse = bench_df['mse'].max() if not bench_df.empty else math.nan
    dims = {'fidelidad': normalize(worst_mse, best=0.0, worst=1.0)}

    if 'strategy' in bench_df.columns:
        full = bench_df[bench_df['strategy'] == 'full']['speedup'].dropna()
    else:
        full = bench_df.get('speedup', pd.Series(dtype=float)).dropna()
    best_speedup = full.max() if not full.empty else math.nan
    dims['aceleracion'] = normalize(best_speedup, best=TARGET_SPEEDUP, worst=1.0)

    if rules_df is not None:
        dims['consistencia'] = round(rules_df['success'].mean(), 3) if not rules_df.empty else 0.0
    return dims


def compute_overall_score(dims: dict, weights: dict = None) -> float:
    """
    dims: dict de {dimension: valor [0–1]}
    weights: dict de {dimension: peso}; por defecto, pesos iguales.
    """
    if weights is None:
        weights = {k: 1.0 / len(dims) for k in dims} if dims else {}
    score = sum(dims.get(k, 0.0) * weights.get(k, 0.0) for k in dims)
    return round(score, 3)


def semaforo(score: float) -> str:
    return 'VERDE' if score >= 0.85 else 'AMBAR' if score >= 0.70 else 'ROJO'


def summarize_bench(bench_df: pd.DataFrame, rules_df: pd.DataFrame = None) -> dict:
    dims = compute_dimensions(bench_df, rules_df)
    score = compute_overall_score(dims)
    return {'dimensions': dims, 'score_global': score, 'semaforo': semaforo(score)}
