"""
Métricas de evaluación: S-TEDS, GriTS_Top y F1 de relaciones de adyacencia (CAR)
"""

import itertools
import logging
import math
import time
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from models.evaluation import METRIC_COLUMNS, EvaluationRecord, EvaluationReport
from models.structure import HtmlNode, TableStructure
from .errors import ConfigurationError, HtmlParseError
from .job_manager import JobManager
from .structure import parse_html_structure, structure_to_tree

logger = logging.getLogger(__name__)

TreeLike = Union[HtmlNode, TableStructure, str]
Box = Tuple[int, int, int, int]
Relation = Tuple[Box, Box, str]

BRUTE_FORCE_MAX = 4
ENUMERATION_MAX = 4096


# ------------------------------------------------------------------- S-TEDS

def _as_tree(value: TreeLike) -> HtmlNode:
    if isinstance(value, HtmlNode):
        return value
    if isinstance(value, TableStructure):
        return structure_to_tree(value)
    return structure_to_tree(parse_html_structure(value))


def _postorder_index(root: HtmlNode) -> Tuple[List[HtmlNode], List[int], List[int]]:
    """Nodos en postorden, hoja más a la izquierda de cada nodo y keyroots"""
    nodes: List[HtmlNode] = []
    leftmost: List[int] = []

    def visit(node: HtmlNode) -> int:
        first = None
        for child in node.children:
            child_leftmost = visit(child)
            if first is None:
                first = child_leftmost
        nodes.append(node)
        index = len(nodes) - 1
        leftmost.append(index if first is None else first)
        return leftmost[index]

    visit(root)
    seen: Dict[int, int] = {}
    for index, left in enumerate(leftmost):
        seen[left] = index
    keyroots = sorted(seen.values())
    return nodes, leftmost, keyroots


def tree_edit_distance(a: HtmlNode, b: HtmlNode) -> int:
    """Distancia de edición ordenada (Zhang-Shasha) con costos unitarios"""
    nodes_a, left_a, keys_a = _postorder_index(a)
    nodes_b, left_b, keys_b = _postorder_index(b)
    treedist = np.zeros((len(nodes_a), len(nodes_b)), dtype=np.int64)

    for i in keys_a:
        for j in keys_b:
            li, lj = left_a[i], left_b[j]
            rows, cols = i - li + 2, j - lj + 2
            forest = np.zeros((rows, cols), dtype=np.int64)
            forest[1:, 0] = np.arange(1, rows)
            forest[0, 1:] = np.arange(1, cols)
            for x in range(1, rows):
                for y in range(1, cols):
                    ia, jb = li + x - 1, lj + y - 1
                    if left_a[ia] == li and left_b[jb] == lj:
                        rename = 0 if nodes_a[ia].same_label(nodes_b[jb]) else 1
                        forest[x, y] = min(forest[x - 1, y] + 1, forest[x, y - 1] + 1,
                                           forest[x - 1, y - 1] + rename)
                        treedist[ia, jb] = forest[x, y]
                    else:
                        px, py = left_a[ia] - li, left_b[jb] - lj
                        forest[x, y] = min(forest[x - 1, y] + 1, forest[x, y - 1] + 1,
                                           forest[px, py] + treedist[ia, jb])
    return int(treedist[-1, -1])


def s_teds(pred: TreeLike, gt: TreeLike) -> float:
    """1 − TED / max(|pred|, |gt|) sobre árboles de estructura sin texto"""
    pred_tree, gt_tree = _as_tree(pred), _as_tree(gt)
    size = max(pred_tree.size(), gt_tree.size())
    if size == 0:
        return 1.0
    return 1.0 - tree_edit_distance(pred_tree, gt_tree) / size


# ---------------------------------------------------------------- GriTS_Top

def topology_grid(table: TableStructure) -> np.ndarray:
    """Matriz R×C×4: caja (r0, c0, r1, c1) de la celda dueña, relativa a cada posición"""
    grid = np.zeros((table.R, table.C, 4), dtype=np.int64)
    for cell in table.cells:
        r0, c0, r1, c1 = cell.footprint
        for r in range(r0, r1):
            for c in range(c0, c1):
                grid[r, c] = (r0 - r, c0 - c, r1 - r, c1 - c)
    return grid


def _iou_tensor(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """F[i, j, k, l] = IoU(pred[i, j], gt[k, l]) en el espacio de índices de rejilla"""
    a = pred[:, :, None, None, :].astype(np.float64)
    b = gt[None, None, :, :, :].astype(np.float64)
    inter_h = np.clip(np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]), 0, None)
    inter_w = np.clip(np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]), 0, None)
    inter = inter_h * inter_w
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    return inter / (area_a + area_b - inter)


def align_1d(scores: np.ndarray) -> Tuple[float, List[Tuple[int, int]]]:
    """Emparejamiento monótono de peso máximo (programación dinámica tipo LCS)"""
    n, m = scores.shape
    table = np.zeros((n + 1, m + 1))
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            table[i, j] = max(table[i - 1, j], table[i, j - 1], table[i - 1, j - 1] + scores[i - 1, j - 1])
    pairs = []
    i, j = n, m
    while i > 0 and j > 0:
        if table[i, j] == table[i - 1, j]:
            i -= 1
        elif table[i, j] == table[i, j - 1]:
            j -= 1
        else:
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
    return float(table[n, m]), pairs[::-1]


@lru_cache(maxsize=None)
def _alignments(n: int, m: int) -> Tuple[Tuple[Tuple[int, ...], Tuple[int, ...]], ...]:
    """Todos los pares de subsecuencias de igual longitud de range(n) y range(m)"""
    out = []
    for k in range(0, min(n, m) + 1):
        for left in itertools.combinations(range(n), k):
            for right in itertools.combinations(range(m), k):
                out.append((left, right))
    return tuple(out)


def _brute_force(F: np.ndarray) -> float:
    R_a, C_a, R_b, C_b = F.shape
    col_alignments = _alignments(C_a, C_b)
    best = 0.0
    for rows_a, rows_b in _alignments(R_a, R_b):
        if not rows_a:
            continue
        M = F[list(rows_a), :, list(rows_b), :].sum(axis=0)
        for cols_a, cols_b in col_alignments:
            value = sum(M[j, l] for j, l in zip(cols_a, cols_b))
            if value > best:
                best = value
    return best


def _enumerated(F: np.ndarray, by_rows: bool) -> float:
    """Recorrer las alineaciones de un eje y resolver el otro con la DP 1D exacta"""
    R_a, C_a, R_b, C_b = F.shape
    best = 0.0
    for left, right in (_alignments(R_a, R_b) if by_rows else _alignments(C_a, C_b)):
        if not left:
            continue
        if by_rows:
            reduced = F[list(left), :, list(right), :].sum(axis=0)
        else:
            reduced = F[:, list(left), :, list(right)].sum(axis=0)
        best = max(best, align_1d(reduced)[0])
    return best


def _factored(F: np.ndarray) -> float:
    """Alternar alineación de filas y de columnas hasta que el objetivo no mejore

    Si un eje tiene a lo sumo ENUMERATION_MAX alineaciones se recorren todas y el resultado es exacto.
    """
    R_a, C_a, R_b, C_b = F.shape
    row_count, col_count = math.comb(R_a + R_b, R_a), math.comb(C_a + C_b, C_a)
    if min(row_count, col_count) <= ENUMERATION_MAX:
        return _enumerated(F, by_rows=row_count <= col_count)

    def from_rows(row_pairs) -> Tuple[float, List[Tuple[int, int]]]:
        if not row_pairs:
            return 0.0, []
        M = sum(F[i, :, k, :] for i, k in row_pairs)
        return align_1d(M)

    def from_cols(col_pairs) -> Tuple[float, List[Tuple[int, int]]]:
        if not col_pairs:
            return 0.0, []
        N = sum(F[:, j, :, l] for j, l in col_pairs)
        return align_1d(N)

    # inicio por filas: puntaje de un par de filas = su mejor alineación 1D de columnas
    row_scores = np.array([[align_1d(F[i, :, k, :])[0] for k in range(R_b)] for i in range(R_a)])
    col_scores = np.array([[align_1d(F[:, j, :, l])[0] for l in range(C_b)] for j in range(C_a)])

    best = 0.0
    for start_rows in (True, False):
        if start_rows:
            _, rows = align_1d(row_scores)
            value, cols = from_rows(rows)
        else:
            _, cols = align_1d(col_scores)
            value, rows = from_cols(cols)
        while True:
            if start_rows:
                new_value, new_rows = from_cols(cols)
                if new_value <= value + 1e-12:
                    break
                value, rows = new_value, new_rows
                new_value, new_cols = from_rows(rows)
                if new_value <= value + 1e-12:
                    break
                value, cols = new_value, new_cols
            else:
                new_value, new_cols = from_rows(rows)
                if new_value <= value + 1e-12:
                    break
                value, cols = new_value, new_cols
                new_value, new_rows = from_cols(cols)
                if new_value <= value + 1e-12:
                    break
                value, rows = new_value, new_rows
        best = max(best, value)
    return best


def grits_top(pred: TableStructure, gt: TableStructure, method: str = "auto") -> float:
    """2·M / (|pred| + |gt|) con M la mejor suma de IoU sobre subsecuencias alineadas"""
    if method not in ("auto", "brute", "factored"):
        raise ConfigurationError(f"método de GriTS desconocido '{method}'")
    size_pred, size_gt = pred.R * pred.C, gt.R * gt.C
    if size_pred == 0 and size_gt == 0:
        return 1.0
    if size_pred == 0 or size_gt == 0:
        return 0.0
    F = _iou_tensor(topology_grid(pred), topology_grid(gt))
    small = max(pred.R, pred.C, gt.R, gt.C) <= BRUTE_FORCE_MAX
    if method == "brute" or (method == "auto" and small):
        matched = _brute_force(F)
    else:
        matched = _factored(F)
    return float(2.0 * matched / (size_pred + size_gt))


# ---------------------------------------------------------------------- CAR

def adjacency_relations(table: TableStructure) -> Set[Relation]:
    """Pares de celdas que comparten un tramo de frontera, con dirección"""
    relations: Set[Relation] = set()
    boxes = [cell.footprint for cell in table.cells]
    for a in boxes:
        for b in boxes:
            if a == b:
                continue
            if a[3] == b[1] and a[0] < b[2] and b[0] < a[2]:
                relations.add((a, b, "horizontal"))
            if a[2] == b[0] and a[1] < b[3] and b[1] < a[3]:
                relations.add((a, b, "vertical"))
    return relations


def car_f1(pred: TableStructure, gt: TableStructure) -> Tuple[float, float, float]:
    """(precisión, exhaustividad, F1) sobre relaciones de adyacencia emparejadas por huella exacta"""
    pred_rel = adjacency_relations(pred)
    gt_rel = adjacency_relations(gt)
    if not pred_rel and not gt_rel:
        same = bool(pred.cells) == bool(gt.cells)
        return (1.0, 1.0, 1.0) if same else (0.0, 0.0, 0.0)
    hits = len(pred_rel & gt_rel)
    precision = hits / len(pred_rel) if pred_rel else 0.0
    recall = hits / len(gt_rel) if gt_rel else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


# ----------------------------------------------------------------- evaluador

class Evaluator:
    """Calcula las métricas pedidas para pares (predicción, GT) y arma el informe"""

    def __init__(self, metrics: Sequence[str] = ("steds", "grits", "car"), workers: Optional[int] = None):
        unknown = [m for m in metrics if m not in METRIC_COLUMNS]
        if unknown:
            raise ConfigurationError(f"métricas desconocidas {unknown}, opciones: {sorted(METRIC_COLUMNS)}")
        self.metrics = list(metrics)
        self.workers = workers
        self.logger = logging.getLogger(__name__)

    def evaluate_pair(self, sample_id: str, pred: TableStructure, gt: TableStructure,
                      latency_ms: Optional[float] = None) -> EvaluationRecord:
        record = EvaluationRecord(id=sample_id, complex=gt.is_complex, latency_ms=latency_ms)
        if "steds" in self.metrics:
            record.steds = s_teds(pred, gt)
        if "grits" in self.metrics:
            record.grits = grits_top(pred, gt)
        if "car" in self.metrics:
            record.car_precision, record.car_recall, record.car_f1 = car_f1(pred, gt)
        self.logger.debug(f"{sample_id}: {record.to_dict()}")
        return record

    def evaluate_many(self, items: Iterable[Tuple[str, TableStructure, TableStructure, Optional[float]]],
                      label: str = "Baseline") -> EvaluationReport:
        start = time.perf_counter()
        records = JobManager(max_workers=self.workers).map_ordered(
            lambda item: self.evaluate_pair(*item), list(items), desc="eval")
        report = EvaluationReport(metrics=self.metrics, records=records, label=label)
        latency = report.latency_summary()
        if latency["p50_ms"] is not None:
            report.extra["latency"] = latency
        overall = report.aggregate()["overall"]
        self.logger.info(f"Evaluación '{label}': {overall} en {time.perf_counter() - start:.2f}s")
        return report


def parse_prediction(html: str, sample_id: str = "") -> TableStructure:
    """HTML predicho → estructura; un HTML inválido cuenta como tabla vacía"""
    try:
        return parse_html_structure(html)
    except HtmlParseError as e:
        logger.warning(f"{sample_id}: predicción HTML inválida ({e}), se evalúa como tabla vacía")
        return TableStructure.empty()


def evaluate_structures(pairs: Sequence[Tuple[str, TableStructure, TableStructure]],
                        metric: Union[str, Sequence[str]] = "steds") -> EvaluationReport:
    metrics = [metric] if isinstance(metric, str) else list(metric)
    return Evaluator(metrics).evaluate_many((sid, p, g, None) for sid, p, g in pairs)
