"""
Jerarquía de errores de FastTab

Cada error lleva un código de salida, igual que un error de API lleva su
status HTTP; la CLI lo traduce directamente.
"""

from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class FastTabError(Exception):
    """Error base de FastTab"""

    exit_code = EXIT_USAGE

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class DimensionError(FastTabError):
    """Formas incompatibles entre tensores"""

    exit_code = EXIT_USAGE


class ConfigurationError(FastTabError):
    """Valor de configuración inválido"""

    exit_code = EXIT_USAGE


class InputError(FastTabError):
    """Entrada inválida (imagen demasiado pequeña, valores fuera de rango)"""

    exit_code = EXIT_DATA


class DatasetError(FastTabError):
    """Registro de dataset inválido o fuera de los topes del modelo"""

    exit_code = EXIT_DATA


class ConsistencyError(FastTabError):
    """Estructuras mutuamente inconsistentes"""

    exit_code = EXIT_DATA


class HtmlParseError(FastTabError):
    """Error del parser HTML, con el offset del carácter donde falló"""

    exit_code = EXIT_DATA

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class NumericError(FastTabError):
    """Valor no finito en pérdidas, gradientes o activaciones"""

    exit_code = EXIT_NUMERIC


class StageError(FastTabError):
    """Fallo dentro de una etapa del pipeline de inferencia"""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"etapa '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", EXIT_DATA)


def exit_code_for(error: Optional[BaseException]) -> int:
    """Código de salida asociado a una excepción"""
    if error is None:
        return EXIT_OK
    return getattr(error, "exit_code", EXIT_DATA)
