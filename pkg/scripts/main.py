import os
import sys
import logging
import functools

import click
import numpy as np

from scripts.bench import BenchConfig, report_emit, run_batch_bench, run_bench
from scripts.cache import CacheStrategy, build_caches, load_cache, save_cache
from scripts.cipher_image import (
    decrypt_image,
    deserialize_cipher_image,
    encrypt_image,
    serialize_cipher_image,
)
from scripts.ckks import keygen
from scripts.errors import PixelHEError
from scripts.io_utils import load_keys, save_json, save_keys
from scripts.load import list_images, load_image, save_image
from scripts.metrics import quality_report
from scripts.ops import (
    WatermarkSpec,
    brighten,
    finalize_l1,
    finalize_l2,
    mask_to_image,
    match_l1,
    match_l2,
    mean_filter,
    watermark_detect,
    watermark_embed,
)
from scripts.params import PRESET_ALIASES, load_params, resolve_pool_size, resolve_workers
from scripts.rules import check_quality, enforce_quality, load_rules, RULES_YML
from scripts.score import summarize_bench

logger = logging.getLogger(__name__)

OS_ERROR_EXIT = 2


def handle_errors(fn):
    """Traduce las excepciones del paquete a mensajes y códigos de salida."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PixelHEError as exc:
            click.echo(f"❌ {type(exc).__name__}: {exc}", err=True)
            sys.exit(exc.exit_code)
        except OSError as exc:
            click.echo(f"❌ {exc}", err=True)
            sys.exit(OS_ERROR_EXIT)
    return wrapper


def _rng(seed):
    return np.random.default_rng(seed)


def _csv_list(value: str, cast=str) -> tuple:
    return tuple(cast(v.strip()) for v in value.split(',') if v.strip())


@click.group()
@click.option('--verbose', is_flag=True, help='Trazas de depuración en stderr')
def cli(verbose):
    """Cifrado homomórfico de imágenes por píxel con cachés de cifrados."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )


@cli.command('keygen')
@click.option('--params', 'preset', default='default', show_default=True,
              help=f"Preset de params.yml (alias: {', '.join(PRESET_ALIASES)})")
@click.option('--params-file', default=None, help='YAML de presets alternativo')
@click.option('--out', 'outdir', required=True, help='Carpeta de claves')
@click.option('--seed', type=int, default=None, help='Semilla para claves reproducibles')
@click.option('--force', is_flag=True, help='Sobrescribir claves existentes')
@handle_errors
def cmd_keygen(preset, params_file, outdir, seed, force):
    params = load_params(preset, params_file)
    keys = keygen(params, seed=seed)
    paths = save_keys(keys, outdir, force=force)
    click.echo(f"🔑 {params.summary()}")
    click.echo(f"✅ Claves escritas en {outdir}/ ({', '.join(os.path.basename(p) for p in paths)})")


@cli.command('encrypt')
@click.option('--in', 'input_path', required=True, help='Imagen BMP/PNG')
@click.option('--keys', 'keydir', required=True, help='Carpeta de claves')
@click.option('--strategy', type=click.Choice(['none', 'radix', 'scan', 'full']), default='full',
              show_default=True)
@click.option('--radix', type=int, default=2, show_default=True)
@click.option('--pool-size', type=int, default=None, help='Tamaño del pool de ceros (ICHEETAH_POOL_SIZE)')
@click.option('--zero-mix', type=int, default=None,
              help='Ceros del pool sumados a cada cifrado (por defecto, según pool y N)')
@click.option('--no-randomness', is_flag=True, help='Desactiva la aleatorización')
@click.option('--radix-zero-pool', is_flag=True, help='Suma también ceros del pool en modo radix')
@click.option('--top-k', type=int, default=None, help='Scan: cachear sólo los k valores más frecuentes')
@click.option('--fallback-fresh', is_flag=True, help='Scan: cifrado fresco si falta el valor')
@click.option('--cache-file', default=None, help='Fichero ICHC: se carga si existe, si no se genera')
@click.option('--workers', type=int, default=None, help='Hilos (ICHEETAH_WORKERS)')
@click.option('--seed', type=int, default=None)
@click.option('--out', 'out_path', required=True, help='Fichero .ichi de salida')
@handle_errors
def cmd_encrypt(input_path, keydir, strategy, radix, pool_size, zero_mix, no_randomness,
                radix_zero_pool, top_k, fallback_fresh, cache_file, workers, seed, out_path):
    img = load_image(input_path)
    keys = load_keys(keydir, require_secret=False)
    workers = resolve_workers(workers)
    strat = CacheStrategy(tag=strategy, radix=radix, pool_size=resolve_pool_size(pool_size),
                          randomness=not no_randomness, zero_mix=zero_mix,
                          radix_zero_pool=radix_zero_pool, top_k=top_k, fallback_fresh=fallback_fresh)
    rng = _rng(seed)

    if cache_file and os.path.exists(cache_file):
        caches = load_cache(cache_file, keys.params, strat, keys.fingerprint)
        click.echo(f"📦 Caché cargada de {cache_file}")
    else:
        caches = build_caches(strat, keys, rng, image=img, workers=workers)
        click.echo(f"⏱️ Construcción de caché '{strategy}': {caches.build_seconds * 1000:.1f} ms")
        if cache_file:
            save_cache(caches, cache_file, keys.fingerprint)
            click.echo(f"📦 Caché guardada en {cache_file}")

    cimg = encrypt_image(img, caches, keys, rng, workers)
    serialize_cipher_image(cimg, out_path)
    click.echo(f"⏱️ Cifrado {img.width}x{img.height}x{img.channels}: {cimg.encrypt_seconds * 1000:.1f} ms")
    click.echo(f"✅ Imagen cifrada en {out_path}")


@cli.command('decrypt')
@click.option('--in', 'input_path', required=True, help='Fichero .ichi')
@click.option('--keys', 'keydir', required=True)
@click.option('--out', 'out_path', required=True, help='Imagen de salida (.bmp o .png)')
@click.option('--workers', type=int, default=None)
@handle_errors
def cmd_decrypt(input_path, keydir, out_path, workers):
    keys = load_keys(keydir)
    cimg = deserialize_cipher_image(input_path, keys.params, keys.fingerprint)
    img = decrypt_image(cimg, keys, resolve_workers(workers))
    save_image(img, out_path)
    click.echo(f"✅ Imagen descifrada en {out_path}")


@cli.command('process')
@click.option('--op', type=click.Choice(['mean-filter', 'brighten', 'watermark']), required=True)
@click.option('--in', 'input_path', required=True)
@click.option('--keys', 'keydir', required=True, help='Carpeta de claves (sólo se leen las públicas)')
@click.option('--out', 'out_path', required=True)
@click.option('--window', type=int, default=3, show_default=True)
@click.option('--delta', type=float, default=50.0, show_default=True)
@click.option('--x', type=int, default=0)
@click.option('--y', type=int, default=0)
@click.option('--channel', type=int, default=0)
@click.option('--value', type=float, default=5.0, show_default=True)
@click.option('--workers', type=int, default=None)
@handle_errors
def cmd_process(op, input_path, keydir, out_path, window, delta, x, y, channel, value, workers):
    keys = load_keys(keydir, require_secret=False)
    cimg = deserialize_cipher_image(input_path, keys.params, keys.fingerprint)
    if op == 'mean-filter':
        result = mean_filter(cimg, window, resolve_workers(workers))
    elif op == 'brighten':
        result = brighten(cimg, delta)
    else:
        result = watermark_embed(cimg, WatermarkSpec(x=x, y=y, channel=channel, value=value))
    serialize_cipher_image(result, out_path)
    click.echo(f"✅ {op} aplicado: {out_path} (nivel {result.level})")


@cli.command('match')
@click.option('--a', 'a_path', required=True)
@click.option('--b', 'b_path', required=True)
@click.option('--mode', type=click.Choice(['l1', 'l2']), default='l1', show_default=True)
@click.option('--keys', 'keydir', required=True)
@click.option('--workers', type=int, default=None)
@handle_errors
def cmd_match(a_path, b_path, mode, keydir, workers):
    keys = load_keys(keydir)
    a = deserialize_cipher_image(a_path, keys.params, keys.fingerprint)
    b = deserialize_cipher_image(b_path, keys.params, keys.fingerprint)
    if mode == 'l1':
        distance = finalize_l1(match_l1(a, b), keys)
    else:
        distance = finalize_l2(match_l2(a, b, keys, resolve_workers(workers)), keys)
    click.echo(f"📏 Distancia {mode.upper()}: {distance:.4f}")


@cli.command('metrics')
@click.option('--a', 'a_path', required=True)
@click.option('--b', 'b_path', required=True)
@click.option('--json', 'json_path', default=None, help='Guardar también como JSON')
@handle_errors
def cmd_metrics(a_path, b_path, json_path):
    report = quality_report(load_image(a_path), load_image(b_path))
    click.echo(f"📊 MSE={report.mse:.4f} PSNR={report.psnr:.2f} dB SSIM={report.ssim:.4f}")
    if json_path:
        save_json(report.as_dict(), json_path)


@cli.command('detect')
@click.option('--original', required=True)
@click.option('--watermarked', required=True, help='Imagen marcada ya descifrada')
@click.option('--threshold', type=float, default=2.5, show_default=True)
@click.option('--out', 'out_path', required=True, help='Máscara BMP de 8 bits')
@handle_errors
def cmd_detect(original, watermarked, threshold, out_path):
    mask = watermark_detect(load_image(original), load_image(watermarked), threshold)
    save_image(mask_to_image(mask), out_path)
    hits = [(int(x), int(y)) for y, x in np.argwhere(mask)]
    click.echo(f"🔍 {len(hits)} píxeles detectados: {hits[:10]}")


@cli.command('bench')
@click.option('--sizes', default='8,64,128,256', show_default=True)
@click.option('--strategies', default='none,radix,scan,full', show_default=True)
@click.option('--reps', type=int, default=3, show_default=True)
@click.option('--radix', type=int, default=2, show_default=True)
@click.option('--pool-size', type=int, default=None)
@click.option('--workers', type=int, default=None)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--channels', type=int, default=1, show_default=True)
@click.option('--params', 'preset', default='default', show_default=True)
@click.option('--keys', 'keydir', default=None, help='Claves existentes (si no, se generan con --seed)')
@click.option('--images-dir', default=None, help='Carpeta de BMP/PNG en lugar de imágenes sintéticas')
@click.option('--batch', is_flag=True, help='Con --images-dir: base frente a caché completa por imagen')
@click.option('--radix-norand', is_flag=True, help='Añadir la fila radix sin aleatorización')
@click.option('--allow-large', is_flag=True, help='Permitir tamaños >= 1024')
@click.option('--rules', 'rules_yml', default=RULES_YML, show_default=True)
@click.option('--out', 'out_csv', default='reports/bench.csv', show_default=True)
@click.option('--markdown', 'out_md', default=None)
@handle_errors
def cmd_bench(sizes, strategies, reps, radix, pool_size, workers, seed, channels, preset, keydir,
              images_dir, batch, radix_norand, allow_large, rules_yml, out_csv, out_md):
    cfg = BenchConfig(sizes=_csv_list(sizes, int), strategies=_csv_list(strategies),
                      repetitions=reps, radix=radix, pool_size=resolve_pool_size(pool_size),
                      workers=resolve_workers(workers), seed=seed, channels=channels,
                      include_radix_norand=radix_norand, allow_large=allow_large)
    rules = load_rules(rules_yml)
    keys = load_keys(keydir) if keydir else keygen(load_params(preset), seed=seed)
    images = {os.path.basename(p): load_image(p) for p in list_images(images_dir)} if images_dir else None

    if batch:
        if not images:
            raise click.UsageError('--batch necesita --images-dir con imágenes')
        report = run_batch_bench(images, keys, cfg)
    else:
        report = run_bench(cfg, keys, list(images.values()) if images else None)

    results = check_quality(report, rules)
    summary = summarize_bench(report.rows, results)
    report_emit(report, 'csv', out_csv)
    if out_md:
        report_emit(report, 'markdown', out_md, rule_results=results, summary=summary)
    click.echo(f"⏱️ {len(report.rows)} filas de benchmark en {out_csv}")
    click.echo(f"🔖 Score: {summary['score_global']} ({summary['semaforo']})")
    warnings = enforce_quality(results)
    for name in warnings:
        click.echo(f"⚠️ Regla de aviso fallida: {name}")
    click.echo("✅ Puerta de calidad superada")


if __name__ == '__main__':
    cli()
