import os
import yaml
import pandas as pd

from scripts.errors import ParameterError, QualityGateError

RULES_YML = os.path.join(os.path.dirname(__file__), 'rules.yml')


def load_rules(path: str = RULES_YML):
    """
    Lee el fichero YAML de reglas y devuelve la lista de reglas.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Fichero de reglas no encontrado: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        cfg = yaml.safe_load(f) or {}
    rules = cfg.get('rules')
    if not isinstance(rules, list):
        raise ParameterError(f"{path} debe tener una sección 'rules' con una lista")
    return rules


def _subset(df: pd.DataFrame, rule: dict) -> pd.DataFrame:
    for col, value in (rule.get('filter') or {}).items():
        if col in df.columns:
            df = df[df[col] == value]
    return df


def _non_decreasing(df: pd.DataFrame, col: str, rule: dict):
    """Comprueba la tendencia dentro de cada grupo (p. ej. por estrategia)."""
    order_by = rule.get('order_by')
    group_by = rule.get('group_by')
    for key in (order_by, group_by):
        if key and key not in df.columns:
            return False, f"columna ausente: {key}"
    groups = df.groupby(group_by) if group_by else [(None, df)]
    drops = 0
    for _, g in groups:
        s = g.sort_values(order_by)[col] if order_by else g[col]
        drops += int((s.diff().dropna() < 0).sum())
    return drops == 0, f"{drops} descensos"


def apply_business_rules(df: pd.DataFrame, rules) -> pd.DataFrame:
    """
    Aplica cada regla configurada:
      - not_null, range, non_decreasing
    Devuelve un DataFrame con columnas: rule, column, success, observed, severity.
    Las reglas con warn_only: true se informan con severity 'warning'.
    """
    records = []
    for rule in rules:
        col = rule['column']
        data = _subset(df, rule)
        cols = data.columns if col == 'any' else [col]
        for c in cols:
            t = rule['type']
            if c not in data.columns:
                ok, obs = False, 'columna ausente'
            elif t == 'not_null':
                n = data[c].isnull().sum(); ok = (n == 0); obs = f"{n} nulls"
            elif t == 'range':
                s = data[c]
                lo, hi = rule.get('min', float('-inf')), rule.get('max', float('inf'))
                # exclusive_min / exclusive_max convierten el límite en estricto
                below = (s <= lo if rule.get('exclusive_min') else s < lo).sum()
                above = (s >= hi if rule.get('exclusive_max') else s > hi).sum()
                ok = (below == 0 and above == 0)
                obs = f"{below}<{lo}, {above}>{hi}"
            elif t == 'non_decreasing':
                ok, obs = _non_decreasing(data, c, rule)
            else:
                ok, obs = True, ''
            records.append({
                'rule': rule['name'],
                'column': c,
                'success': bool(ok),
                'observed': obs,
                'severity': 'warning' if rule.get('warn_only') else 'error',
            })
    return pd.DataFrame(records, columns=['rule', 'column', 'success', 'observed', 'severity'])


def check_quality(report, rules=None) -> pd.DataFrame:
    """Evalúa las reglas de calidad (rules.yml por defecto) sobre las filas del informe."""
    if rules is None:
        rules = load_rules()
    return apply_business_rules(report.rows, rules)


def enforce_quality(results: pd.DataFrame) -> list:
    """
    Lanza QualityGateError si falla alguna regla de severidad 'error'.
    Devuelve los nombres de las reglas de aviso que fallaron.
    """
    failed = results[~results['success']]
    errors = failed[failed['severity'] == 'error']
    if not errors.empty:
        detail = ', '.join(f"{r.rule} ({r.observed})" for r in errors.itertuples())
        raise QualityGateError(f"Reglas de calidad fallidas: {detail}")
    return list(failed['rule'])
