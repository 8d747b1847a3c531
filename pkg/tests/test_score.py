import math

import pandas as pd
from scripts.score import (
    TARGET_SPEEDUP,
    compute_dimensions,
    compute_overall_score,
    normalize,
    semaforo,
    summarize_bench,
)

def test_normalize_bounds():
    assert normalize(0, 0, 100) == 1.0
    assert normalize(100, 0, 100) == 0.0
    assert normalize(150, 0, 100) == 0.0

def test_normalize_middle():
    # 50% en rango 0–100 => (100-50)/100 = 0.5
    assert normalize(50, 0, 100) == 0.5

def test_normalize_higher_is_better():
    # speedup 10 entre 1 y 19 => 0.5
    assert normalize(10, best=TARGET_SPEEDUP, worst=1.0) == 0.5
    assert normalize(25, best=TARGET_SPEEDUP, worst=1.0) == 1.0
    assert normalize(math.nan, best=TARGET_SPEEDUP, worst=1.0) == 0.0

def test_compute_dimensions_minimal():
    # DataFrames vacíos => fidelidad=0, aceleracion=0, consistencia=0
    dims = compute_dimensions(pd.DataFrame(), pd.DataFrame())
    assert dims == {'fidelidad': 0.0, 'aceleracion': 0.0, 'consistencia': 0.0}

def test_compute_dimensions_with_data():
    bench = pd.DataFrame({
        'strategy': ['none', 'full', 'none', 'full'],
        'size': [8, 8, 64, 64],
        'speedup': [1.0, 5.5, 1.0, 10.0],
        'mse': [0.0, 0.1, 0.0, 0.2],
    })
    rules = pd.DataFrame({'success': [True, False, True]})
    dims = compute_dimensions(bench, rules)
    # fidelidad = 1 - peor MSE (0.2)
    assert dims['fidelidad'] == 0.8
    # aceleracion con el mejor speedup de full (10)
    assert dims['aceleracion'] == 0.5
    # consistencia = avg([1,0,1]) = 0.667
    assert dims['consistencia'] == 0.667

def test_dimensions_without_rules():
    bench = pd.DataFrame({'strategy': ['full'], 'speedup': [19.0], 'mse': [0.0]})
    assert compute_dimensions(bench) == {'fidelidad': 1.0, 'aceleracion': 1.0}

def test_compute_overall_score_default_weights():
    dims = {'fidelidad': 1, 'aceleracion': 0.5, 'consistencia': 0}
    # (1 + 0.5 + 0) / 3
    assert compute_overall_score(dims) == 0.5
    assert compute_overall_score(dims, weights={'fidelidad': 1.0}) == 1.0

def test_semaforo():
    assert semaforo(0.9) == 'VERDE'
    assert semaforo(0.85) == 'VERDE'
    assert semaforo(0.7) == 'AMBAR'
    assert semaforo(0.2) == 'ROJO'

def test_summarize_bench():
    bench = pd.DataFrame({'strategy': ['none', 'full'], 'speedup': [1.0, 19.0], 'mse': [0.0, 0.0]})
    rules = pd.DataFrame({'success': [True, True]})
    summary = summarize_bench(bench, rules)
    assert summary['score_global'] == 1.0
    assert summary['semaforo'] == 'VERDE'
    assert set(summary['dimensions']) == {'fidelidad', 'aceleracion', 'consistencia'}
