import math
import os

import pandas as pd
from jinja2 import Environment, FileSystemLoader

from scripts.io_utils import atomic_write_with

TEMPLATE_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir, 'templates'))

SEMAFORO_SYMBOLS = {
    'VERDE': '✔',
    'AMBAR': '⚠',
    'ROJO': '✖',
}


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return '∞'
        if math.isnan(value):
            return '–'
        return f"{value:.3f}"
    return str(value)


def render_markdown(report, output_path: str, rule_results: pd.DataFrame = None,
                    summary: dict = None, template_dir: str = TEMPLATE_DIR):
    """Tabla del benchmark (mismas columnas que el CSV), reglas y semáforo."""
    env = Environment(loader=FileSystemLoader(template_dir), keep_trailing_newline=True)
    env.filters['fmt'] = _fmt
    tpl = env.get_template('report.md.j2')

    sym = SEMAFORO_SYMBOLS.get((summary or {}).get('semaforo'), '?')
    text = tpl.render(
        columns=list(report.rows.columns),
        rows=report.rows.to_dict(orient='records'),
        metadata=report.metadata,
        rules=[] if rule_results is None else rule_results.to_dict(orient='records'),
        summary=summary,
        semaforo_symbol=sym,
    )
    atomic_write_with(output_path, lambda f: f.write(text), mode='w')
