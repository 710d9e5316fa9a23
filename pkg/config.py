import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).parent

# Configuración de ejecución (variables de entorno)
APP_CONFIG = {
    "threads": max(1, int(os.getenv("FASTTAB_THREADS", min(os.cpu_count() or 1, 8)))),
    "log_level": os.getenv("FASTTAB_LOG_LEVEL", "INFO").upper(),
    "log_dir": Path(os.getenv("FASTTAB_LOG_DIR", str(BASE_DIR / "logs"))),
}

# Topes por dataset: (R_max, C_max, RS_max, CS_max) y tamaño de batch
DATASET_CAPS = {
    "pubtabnet": {"R_max": 50, "C_max": 30, "RS_max": 10, "CS_max": 10, "batch_size": 16},
    "fintabnet": {"R_max": 85, "C_max": 30, "RS_max": 10, "CS_max": 25, "batch_size": 10},
    "pubtables1m": {"R_max": 85, "C_max": 52, "RS_max": 55, "CS_max": 40, "batch_size": 10},
    "scitsr": {"R_max": 60, "C_max": 66, "RS_max": 17, "CS_max": 17, "batch_size": 8},
}

# Valores por defecto compartidos entre módulos
DEFAULTS = {
    "layernorm_eps": 1e-5,
    "dropout": 0.1,
    "roi_samples": 2,
    "curved_samples": 128,
    "anonymise": {
        "pixel_block": 8,
        "noise_sigma": 0.2,
        "blur_sigma_ratio": 0.25,
        "blur_truncate": 3.0,
    },
    "report_schema": 1,
    "weights_format_version": 1,
}

# Configuración de logging
LOGGING_CONFIG = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "default": {
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            "datefmt": "%Y-%m-%d %H:%M:%S"
        }
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "default",
            "level": APP_CONFIG["log_level"],
            "stream": "ext://sys.stderr"
        },
        "file": {
            "class": "logging.FileHandler",
            "filename": str(APP_CONFIG["log_dir"] / "fasttab.log"),
            "formatter": "default",
            "level": "DEBUG",
            "delay": True
        }
    },
    "root": {
        "handlers": ["console", "file"],
        "level": APP_CONFIG["log_level"]
    }
}


def ensure_log_dir() -> Path:
    """Crear directorio de logs si no existe"""
    APP_CONFIG["log_dir"].mkdir(parents=True, exist_ok=True)
    return APP_CONFIG["log_dir"]
