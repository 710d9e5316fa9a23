"""
Modelos de datos de FastTab
"""

from .base import BaseModel
from .config import FastTabConfig
from .grid import CellRect, CurvedGrid, GridSpec, SpanGrid
from .structure import HtmlNode, LogicalCell, TableStructure
from .sample import AnonymMethod, Sample
from .history import LossBreakdown, TrainingHistory
from .evaluation import EvaluationRecord, EvaluationReport

__all__ = [
    'BaseModel',
    'FastTabConfig',
    'GridSpec',
    'SpanGrid',
    'CellRect',
    'CurvedGrid',
    'LogicalCell',
    'TableStructure',
    'HtmlNode',
    'Sample',
    'AnonymMethod',
    'LossBreakdown',
    'TrainingHistory',
    'EvaluationRecord',
    'EvaluationReport'
]
