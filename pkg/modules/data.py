"""
Datos sintéticos: renderizado de tablas, anonimización, rotación y E/S del dataset
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import cv2
import numpy as np
from PIL import Image

from config import DEFAULTS
from models.config import Caps
from models.grid import CurvedGrid, GridSpec, SpanGrid
from models.sample import AnonymMethod, Box, Sample
from .errors import DatasetError, InputError
from .job_manager import JobManager
from .numerics import Rng, derive_seed
from .structure import random_structure

logger = logging.getLogger(__name__)

INDEX_FILE = "index.jsonl"
IMAGE_DIR = "images"


@dataclass
class SynthStyle:
    """Parámetros de estilo del renderizador"""

    ruled: bool = True
    row_height: Tuple[int, int] = (16, 28)
    col_width: Tuple[int, int] = (28, 64)
    padding: int = 3
    words: Tuple[int, int] = (1, 3)
    header_shade: float = 0.85
    line_value: float = 0.0
    text_value: Tuple[float, float] = (0.05, 0.35)


def quantize(image: np.ndarray) -> np.ndarray:
    """Redondear a 8 bits para que memoria y disco coincidan"""
    return (np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def _pixel_edges(sizes: Sequence[int]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)


def render_synthetic(R: int, C: int, spans: SpanGrid, H_hdr: int, style: SynthStyle, rng: Rng,
                     sample_id: str = "sample") -> Sample:
    """Lienzo blanco, banda de cabecera, reglas opcionales y 1–3 bloques de "palabras" por celda"""
    if spans.R != R or spans.C != C:
        raise DatasetError(f"{sample_id}: spans {spans.R}x{spans.C} no corresponden a {R}x{C}")
    spans.validate()
    if not 0 <= H_hdr <= R:
        raise DatasetError(f"{sample_id}: H_hdr={H_hdr} fuera de [0, {R}]")

    heights = [rng.integers(style.row_height[0], style.row_height[1] + 1) for _ in range(R)]
    widths = [rng.integers(style.col_width[0], style.col_width[1] + 1) for _ in range(C)]
    ys = _pixel_edges(heights)
    xs = _pixel_edges(widths)
    height, width = int(ys[-1]), int(xs[-1])
    canvas = np.ones((height, width), dtype=np.float64)
    canvas = np.repeat(canvas[None], 3, axis=0)

    if H_hdr > 0:
        canvas[:, :ys[H_hdr], :] = style.header_shade

    text_boxes: List[Box] = []
    for r, c, rs, cs in spans.anchors():
        top, bottom = int(ys[r]), int(ys[r + rs])
        left, right = int(xs[c]), int(xs[c + cs])
        if style.ruled:
            canvas[:, min(top, height - 1), left:right] = style.line_value
            canvas[:, min(bottom, height - 1), left:right] = style.line_value
            canvas[:, top:bottom, min(left, width - 1)] = style.line_value
            canvas[:, top:bottom, min(right, width - 1)] = style.line_value

        inner_x0 = left + style.padding + 1
        inner_x1 = right - style.padding - 1
        inner_y0 = top + style.padding + 1
        inner_y1 = bottom - style.padding - 1
        if inner_x1 - inner_x0 < 2 or inner_y1 - inner_y0 < 2:
            continue
        count = rng.integers(style.words[0], style.words[1] + 1)
        slot = (inner_x1 - inner_x0) / count
        for k in range(count):
            slot_x0 = inner_x0 + int(round(k * slot))
            slot_x1 = inner_x0 + int(round((k + 1) * slot))
            word_w = max(1, int(round((slot_x1 - slot_x0) * rng.uniform(0.5, 0.9))))
            word_h = max(1, int(round((inner_y1 - inner_y0) * rng.uniform(0.4, 0.8))))
            x0 = slot_x0
            y0 = inner_y0 + rng.integers(0, inner_y1 - inner_y0 - word_h + 1)
            box = (x0, y0, min(x0 + word_w, inner_x1), y0 + word_h)
            if box[2] <= box[0]:
                continue
            canvas[:, box[1]:box[3], box[0]:box[2]] = rng.uniform(*style.text_value)
            text_boxes.append(box)

    grid = GridSpec(R=R, C=C, H_hdr=H_hdr, y=ys / height, x=xs / width)
    grid.y[-1] = 1.0
    grid.x[-1] = 1.0
    return Sample(id=sample_id, image=quantize(canvas), grid=grid.validate(), spans=spans,
                  text_boxes=text_boxes).validate()


# ----------------------------------------------------------- anonimización

def _box_view(image: np.ndarray, box: Box) -> Optional[Tuple[slice, slice]]:
    x0, y0, x1, y1 = (int(v) for v in box)
    _, height, width = image.shape
    if not (0 <= x0 <= x1 <= width and 0 <= y0 <= y1 <= height):
        raise InputError(f"caja {box} fuera de la imagen {height}x{width}")
    if x1 == x0 or y1 == y0:
        return None
    return slice(y0, y1), slice(x0, x1)


def anonymise(image: np.ndarray, boxes: Iterable[Box], method: Union[AnonymMethod, str],
              rng: Optional[Rng] = None, params: Optional[Dict] = None) -> np.ndarray:
    """Eliminar el contenido legible de cada caja; los píxeles fuera de las cajas no cambian"""
    method = AnonymMethod.parse(method) if isinstance(method, str) else method
    params = {**DEFAULTS["anonymise"], **(params or {})}
    out = np.array(image, copy=True)
    for box in boxes:
        view = _box_view(out, box)
        if view is None:
            continue
        rows, cols = view
        region = out[:, rows, cols]
        if method is AnonymMethod.BLACK:
            out[:, rows, cols] = 0.0
        elif method is AnonymMethod.MEAN:
            out[:, rows, cols] = region.mean(axis=(1, 2), keepdims=True)
        elif method is AnonymMethod.MEDIAN:
            out[:, rows, cols] = np.median(region, axis=(1, 2), keepdims=True)
        elif method is AnonymMethod.GAUSSIAN_BLUR:
            sigma = region.shape[1] * params["blur_sigma_ratio"]
            radius = max(1, int(math.ceil(params["blur_truncate"] * sigma)))
            hwc = np.ascontiguousarray(region.transpose(1, 2, 0), dtype=np.float32)
            blurred = cv2.GaussianBlur(hwc, (2 * radius + 1, 2 * radius + 1), sigmaX=sigma, sigmaY=sigma,
                                       borderType=cv2.BORDER_REFLECT)
            if blurred.ndim == 2:
                blurred = blurred[:, :, None]
            out[:, rows, cols] = blurred.transpose(2, 0, 1)
        elif method is AnonymMethod.PIXELATION:
            block = int(params["pixel_block"])
            pixelated = region.copy()
            for by in range(0, region.shape[1], block):
                for bx in range(0, region.shape[2], block):
                    tile = region[:, by:by + block, bx:bx + block]
                    pixelated[:, by:by + block, bx:bx + block] = tile.mean(axis=(1, 2), keepdims=True)
            out[:, rows, cols] = pixelated
        elif method is AnonymMethod.NOISE:
            if rng is None:
                raise InputError("la anonimización por ruido requiere un Rng")
            noise = rng.normal(0.0, params["noise_sigma"], size=region.shape)
            out[:, rows, cols] = np.clip(region + noise, 0.0, 1.0)
    return out.astype(image.dtype, copy=False)


def anonymise_sample(sample: Sample, method: Union[AnonymMethod, str], rng: Rng) -> Sample:
    """Un solo método aplicado a todas las cajas de texto de la muestra"""
    return sample.with_image(anonymise(sample.image, sample.text_boxes, method, rng))


# ---------------------------------------------------------------- rotación

def rotation_matrix(theta_deg: float, width: int, height: int) -> Tuple[np.ndarray, int, int]:
    """Matriz afín 2×3 que rota alrededor del centro y recentra en el lienzo envolvente"""
    radians = math.radians(theta_deg)
    cos, sin = abs(math.cos(radians)), abs(math.sin(radians))
    new_w = max(1, int(round(cos * width + sin * height)))
    new_h = max(1, int(round(sin * width + cos * height)))
    matrix = cv2.getRotationMatrix2D(((width - 1) / 2.0, (height - 1) / 2.0), theta_deg, 1.0)
    matrix[0, 2] += (new_w - width) / 2.0
    matrix[1, 2] += (new_h - height) / 2.0
    return matrix, new_w, new_h


def rotate_image(image: np.ndarray, theta_deg: float) -> Tuple[np.ndarray, np.ndarray]:
    """Rotación bilineal sobre fondo blanco; devuelve la imagen y la matriz usada"""
    _, height, width = image.shape
    matrix, new_w, new_h = rotation_matrix(theta_deg, width, height)
    hwc = np.ascontiguousarray(image.transpose(1, 2, 0), dtype=np.float32)
    rotated = cv2.warpAffine(hwc, matrix, (new_w, new_h), flags=cv2.INTER_LINEAR,
                             borderMode=cv2.BORDER_CONSTANT, borderValue=(1.0, 1.0, 1.0))
    return rotated.transpose(2, 0, 1).astype(image.dtype), matrix


def rotate_points(points: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Aplicar la matriz a puntos continuos (x, y) en píxeles"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    # centros de píxel: coordenada continua p ↔ índice p − 0.5
    shifted = points - 0.5
    mapped = shifted @ matrix[:, :2].T + matrix[:, 2]
    return mapped + 0.5


def rotate_sample(sample: Sample, alpha_deg: float, rng: Rng, K: int = DEFAULTS["curved_samples"]) -> Sample:
    """θ ~ U(−α, α); fronteras rectas → polilíneas de K puntos en el marco rotado"""
    if alpha_deg < 0:
        raise InputError(f"alpha debe ser >= 0, recibido {alpha_deg}")
    if alpha_deg == 0:
        return Sample(id=sample.id, image=sample.image.copy(), grid=sample.grid.copy(), spans=sample.spans,
                      text_boxes=list(sample.text_boxes), curved=CurvedGrid.straight(sample.grid, K))
    theta = rng.uniform(-alpha_deg, alpha_deg)
    return rotate_sample_by(sample, theta, K)


def rotate_sample_by(sample: Sample, theta_deg: float, K: int = DEFAULTS["curved_samples"]) -> Sample:
    height, width = sample.height, sample.width
    image, matrix = rotate_image(sample.image, theta_deg)
    new_h, new_w = image.shape[1], image.shape[2]
    t = np.linspace(0.0, 1.0, K)
    grid = sample.grid

    row_poly = np.empty((grid.R + 1, K))
    for i, y in enumerate(grid.y):
        mapped = rotate_points(np.stack([t * width, np.full(K, y * height)], axis=1), matrix)
        row_poly[i] = mapped[:, 1] / new_h
    col_poly = np.empty((grid.C + 1, K))
    for j, x in enumerate(grid.x):
        mapped = rotate_points(np.stack([np.full(K, x * width), t * height], axis=1), matrix)
        col_poly[j] = mapped[:, 0] / new_w
    row_poly[0], row_poly[-1] = 0.0, 1.0
    col_poly[0], col_poly[-1] = 0.0, 1.0

    base = GridSpec(R=grid.R, C=grid.C, H_hdr=grid.H_hdr,
                    y=np.maximum.accumulate(np.clip(row_poly.mean(axis=1), 0.0, 1.0)),
                    x=np.maximum.accumulate(np.clip(col_poly.mean(axis=1), 0.0, 1.0)))
    base.y[0], base.y[-1], base.x[0], base.x[-1] = 0.0, 1.0, 0.0, 1.0

    boxes: List[Box] = []
    for x0, y0, x1, y1 in sample.text_boxes:
        corners = rotate_points(np.array([[x0, y0], [x1, y0], [x0, y1], [x1, y1]], dtype=np.float64), matrix)
        bx0, by0 = np.floor(corners.min(axis=0)).astype(int)
        bx1, by1 = np.ceil(corners.max(axis=0)).astype(int)
        boxes.append((int(max(bx0, 0)), int(max(by0, 0)), int(min(bx1, new_w)), int(min(by1, new_h))))

    curved = CurvedGrid(base=base, K=K, row_poly=row_poly, col_poly=col_poly)
    return Sample(id=sample.id, image=np.clip(image, 0.0, 1.0), grid=base.validate(), spans=sample.spans,
                  text_boxes=boxes, curved=curved)


# ---------------------------------------------------------------- datasets

def parse_caps(value: str) -> Caps:
    """'R,C,RS,CS' o el nombre de un preset de dataset"""
    from config import DATASET_CAPS

    value = value.strip().lower()
    if value in DATASET_CAPS:
        preset = DATASET_CAPS[value]
        return Caps(R_max=preset["R_max"], C_max=preset["C_max"], RS_max=preset["RS_max"],
                    CS_max=preset["CS_max"])
    try:
        R_max, C_max, RS_max, CS_max = (int(v) for v in value.split(","))
    except ValueError as e:
        raise DatasetError(f"topes inválidos '{value}', use R,C,RS,CS o {sorted(DATASET_CAPS)}") from e
    return Caps(R_max=R_max, C_max=C_max, RS_max=RS_max, CS_max=CS_max)


def generate_sample(index: int, seed: int, caps: Caps, style: str = "ruled",
                    anonymise_method: Optional[str] = None, rotate_alpha: float = 0.0,
                    K: int = DEFAULTS["curved_samples"], merge_prob: float = 0.3) -> Sample:
    """Muestra determinista: la semilla se deriva de (seed, id), nunca del orden de ejecución"""
    sample_id = f"synth_{index:05d}"
    rng = Rng(derive_seed(seed, sample_id))
    R = rng.integers(1, caps.R_max + 1)
    C = rng.integers(1, caps.C_max + 1)
    table = random_structure(R, C, rng, caps.RS_max, caps.CS_max, merge_prob)
    ruled = {"ruled": True, "borderless": False}.get(style)
    if ruled is None:
        ruled = rng.bernoulli(0.5)
    sample = render_synthetic(R, C, table.to_span_grid(), table.H_hdr, SynthStyle(ruled=ruled), rng, sample_id)
    if anonymise_method:
        method = (rng.choice(list(AnonymMethod)) if anonymise_method == "random"
                  else AnonymMethod.parse(anonymise_method))
        sample = anonymise_sample(sample, method, rng)
    if rotate_alpha > 0:
        sample = rotate_sample(sample, rotate_alpha, rng, K)
        sample = sample.with_image(quantize(sample.image))
    return sample


def generate_dataset(n: int, seed: int, caps: Caps, style: str = "ruled",
                     anonymise_method: Optional[str] = None, rotate_alpha: float = 0.0,
                     K: int = DEFAULTS["curved_samples"], workers: Optional[int] = None) -> List[Sample]:
    manager = JobManager(max_workers=workers)
    samples = manager.map_ordered(
        lambda i: generate_sample(i, seed, caps, style, anonymise_method, rotate_alpha, K),
        range(n), desc="synth")
    logger.info(f"Generadas {len(samples)} muestras (semilla {seed}, topes {caps.model_dump()})")
    return samples


def read_image(path: Union[str, Path]) -> np.ndarray:
    """PPM o PNG → (3, H, W) float32 en [0, 1]"""
    try:
        with Image.open(path) as img:
            array = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, ValueError) as e:
        raise InputError(f"no se pudo leer la imagen {path}: {e}") from e
    return np.ascontiguousarray(array.transpose(2, 0, 1))


def write_image(path: Union[str, Path], image: np.ndarray) -> Path:
    """(3, H, W) en [0, 1] → PPM binario (P6) de 8 bits, o PNG según la extensión"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(np.ascontiguousarray(pixels), mode="RGB").save(
        path, format="PPM" if path.suffix.lower() == ".ppm" else None)
    return path


def save_dataset(samples: Sequence[Sample], out_dir: Union[str, Path]) -> Path:
    """Escribir images/<id>.ppm e index.jsonl en orden"""
    out_dir = Path(out_dir)
    (out_dir / IMAGE_DIR).mkdir(parents=True, exist_ok=True)
    lines = []
    for sample in samples:
        image_name = f"{IMAGE_DIR}/{sample.id}.ppm"
        write_image(out_dir / image_name, sample.image)
        lines.append(json.dumps(sample.to_record(image_name)))
    index = out_dir / INDEX_FILE
    index.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    logger.info(f"Dataset guardado en {out_dir} ({len(samples)} muestras)")
    return index


def load_dataset(data_dir: Union[str, Path]) -> List[Sample]:
    data_dir = Path(data_dir)
    index = data_dir / INDEX_FILE if data_dir.is_dir() else data_dir
    if not index.exists():
        raise DatasetError(f"no existe el índice {index}")
    root = index.parent
    samples = []
    with open(index, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{index}:{number}: JSON inválido: {e}") from e
            samples.append(Sample.from_record(record, read_image(root / record["image"])))
    if not samples:
        raise DatasetError(f"dataset vacío: {index}")
    logger.info(f"Cargadas {len(samples)} muestras desde {index}")
    return samples
