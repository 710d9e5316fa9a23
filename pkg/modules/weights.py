"""
Archivo de pesos: manifiesto JSON de una línea seguido del blob little-endian
"""

import json
import logging
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from config import DEFAULTS
from models.config import FastTabConfig
from .errors import DatasetError
from .numerics import Rng
from .pipeline import FastTabModel

logger = logging.getLogger(__name__)

FORMAT_VERSION = DEFAULTS["weights_format_version"]
DTYPES = {"float64": "<f8", "float32": "<f4"}


def save_weights(model: FastTabModel, path: Union[str, Path]) -> Path:
    """Escribir el manifiesto y los tensores en el orden de named_parameters()"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = []
    blobs = []
    offset = 0
    for name, tensor in model.named_parameters().items():
        dtype = np.dtype(tensor.dtype).name
        if dtype not in DTYPES:
            raise DatasetError(f"{name}: dtype {dtype} no soportado en el archivo de pesos")
        raw = np.ascontiguousarray(tensor.data, dtype=DTYPES[dtype]).tobytes()
        tensors.append({"name": name, "shape": list(tensor.shape), "offset": offset, "dtype": dtype})
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": model.config.model_dump(mode="json"),
        "tensors": tensors,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(manifest, separators=(",", ":"), sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        for raw in blobs:
            f.write(raw)
    logger.info(f"Pesos guardados en {path}: {len(tensors)} tensores, {offset} bytes")
    return path


def read_weights(path: Union[str, Path]) -> Tuple[Dict, Dict[str, np.ndarray]]:
    """Leer y validar manifiesto y blob (offsets contiguos, longitud exacta)"""
    path = Path(path)
    try:
        content = path.read_bytes()
    except OSError as e:
        raise DatasetError(f"no se pudo leer el archivo de pesos {path}: {e}") from e
    newline = content.find(b"\n")
    if newline < 0:
        raise DatasetError(f"{path}: falta el manifiesto terminado en salto de línea")
    try:
        manifest = json.loads(content[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DatasetError(f"{path}: manifiesto inválido: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetError(f"{path}: format_version {manifest.get('format_version')} no soportado")

    blob = memoryview(content)[newline + 1:]
    arrays: Dict[str, np.ndarray] = {}
    expected = 0
    for entry in manifest.get("tensors", []):
        dtype = entry.get("dtype")
        if dtype not in DTYPES:
            raise DatasetError(f"{path}: dtype {dtype!r} desconocido en {entry.get('name')}")
        shape = tuple(int(s) for s in entry["shape"])
        size = int(np.prod(shape, dtype=np.int64)) * np.dtype(DTYPES[dtype]).itemsize
        if entry["offset"] != expected:
            raise DatasetError(f"{path}: offset {entry['offset']} de {entry['name']} no contiguo (esperado {expected})")
        if expected + size > len(blob):
            raise DatasetError(f"{path}: blob truncado en {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(blob[expected:expected + size], dtype=DTYPES[dtype]) \
            .reshape(shape).astype(dtype)
        expected += size
    if expected != len(blob):
        raise DatasetError(f"{path}: el blob tiene {len(blob)} bytes, el manifiesto describe {expected}")
    return manifest, arrays


def load_model(path: Union[str, Path]) -> FastTabModel:
    """Reconstruir el modelo desde la configuración embebida y cargar sus tensores"""
    manifest, arrays = read_weights(path)
    config = FastTabConfig.model_validate(manifest["config"])
    model = FastTabModel(config, Rng(config.seed).spawn("init"))
    model.load_arrays(arrays)
    model.eval()
    logger.info(f"Modelo cargado desde {path} ({model.parameter_count()} parámetros)")
    return model
