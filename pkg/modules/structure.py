"""
Estructura lógica: construcción, emisión HTML canónica y parser estricto
"""

import logging
from html.parser import HTMLParser
from typing import Dict, List, Optional, Tuple

import numpy as np

from models.grid import CellRect, GridSpec, SpanGrid
from models.structure import HtmlNode, LogicalCell, TableStructure
from .errors import ConsistencyError, HtmlParseError
from .grid_span import resolve_spans
from .numerics import Rng

logger = logging.getLogger(__name__)

SECTION_TAGS = ("thead", "tbody")


def build_structure(grid: GridSpec, spans: SpanGrid) -> TableStructure:
    """Una celda por ancla; cabecera si r < H_hdr; geometría desde las fronteras"""
    if (grid.R, grid.C) != (spans.R, spans.C):
        raise ConsistencyError(f"rejilla {grid.R}x{grid.C} y spans {spans.R}x{spans.C} no coinciden")
    cells = []
    geometry = []
    for r, c, rs, cs in spans.anchors():
        cells.append(LogicalCell(r=r, c=c, rowspan=rs, colspan=cs, is_header=r < grid.H_hdr))
        geometry.append(CellRect(r=r, c=c, x0=float(grid.x[c]), y0=float(grid.y[r]),
                                 x1=float(grid.x[c + cs]), y1=float(grid.y[r + rs])))
    return TableStructure(R=grid.R, C=grid.C, H_hdr=grid.H_hdr, cells=cells, geometry=geometry)


def _td(cell: LogicalCell) -> str:
    attrs = ""
    if cell.rowspan > 1:
        attrs += f' rowspan="{cell.rowspan}"'
    if cell.colspan > 1:
        attrs += f' colspan="{cell.colspan}"'
    return f"<td{attrs}></td>"


def to_html(table: TableStructure) -> str:
    """Serialización canónica: thead con las primeras H_hdr filas (si hay), luego tbody"""
    rows: Dict[int, List[LogicalCell]] = {r: [] for r in range(table.R)}
    for cell in table.cells:
        rows[cell.r].append(cell)
    parts = ["<table>"]
    if table.H_hdr > 0:
        parts.append("<thead>")
        parts.extend("<tr>" + "".join(_td(c) for c in rows[r]) + "</tr>" for r in range(table.H_hdr))
        parts.append("</thead>")
    parts.append("<tbody>")
    parts.extend("<tr>" + "".join(_td(c) for c in rows[r]) + "</tr>" for r in range(table.H_hdr, table.R))
    parts.append("</tbody></table>")
    return "".join(parts)


class _StructureParser(HTMLParser):
    """Recorre el subconjunto table/thead/tbody/tr/td(th); estricto fuera de td"""

    def __init__(self, source: str):
        super().__init__(convert_charrefs=True)
        self.source = source
        self._line_starts = [0]
        for index, char in enumerate(source):
            if char == "\n":
                self._line_starts.append(index + 1)
        self.stack: List[str] = []
        self.tables = 0
        self.rows: List[List[Tuple[int, int, int]]] = []
        self.row_offsets: List[int] = []
        self.header_rows = 0
        self.body_started = False
        self.cell_depth = 0

    def _char_offset(self) -> int:
        line, column = self.getpos()
        return self._line_starts[line - 1] + column

    def fail(self, message: str):
        raise HtmlParseError(message, self._char_offset())

    def _span(self, attrs, name: str) -> int:
        for key, value in attrs:
            if key == name:
                try:
                    span = int(str(value).strip())
                except (TypeError, ValueError):
                    self.fail(f"{name} no entero: {value!r}")
                if span < 1:
                    self.fail(f"{name} debe ser >= 1: {span}")
                return span
        return 1

    def handle_starttag(self, tag, attrs):
        if self.cell_depth:
            # contenido de la celda: se descarta
            if tag in ("td", "th", "tr", "table", "thead", "tbody"):
                self.fail(f"<{tag}> anidado dentro de una celda")
            return
        parent = self.stack[-1] if self.stack else None
        if tag == "table":
            if parent is not None or self.tables:
                self.fail("se admite exactamente un elemento <table>")
            self.tables += 1
        elif tag in SECTION_TAGS:
            if parent != "table":
                self.fail(f"<{tag}> fuera de <table>")
            if tag == "thead" and self.body_started:
                self.fail("<thead> después de filas de cuerpo")
        elif tag == "tr":
            if parent not in ("table", "thead", "tbody"):
                self.fail("<tr> fuera de una tabla")
            self.rows.append([])
            self.row_offsets.append(self._char_offset())
            if parent == "thead":
                self.header_rows += 1
            else:
                self.body_started = True
        elif tag in ("td", "th"):
            if parent != "tr":
                self.fail(f"<{tag}> fuera de <tr>")
            self.rows[-1].append((self._span(attrs, "rowspan"), self._span(attrs, "colspan"), self._char_offset()))
            self.cell_depth = 1
            tag = "td"
        else:
            self.fail(f"etiqueta no admitida <{tag}>")
        self.stack.append(tag)

    def handle_startendtag(self, tag, attrs):
        if self.cell_depth:
            return
        self.fail(f"etiqueta autocerrada <{tag}/> no admitida")

    def handle_endtag(self, tag):
        tag = "td" if tag == "th" else tag
        if self.cell_depth:
            if tag != "td":
                return
            self.cell_depth = 0
        if not self.stack or self.stack[-1] != tag:
            expected = self.stack[-1] if self.stack else "nada"
            self.fail(f"cierre </{tag}> inesperado, se esperaba </{expected}>")
        self.stack.pop()

    def handle_data(self, data):
        if not self.cell_depth and data.strip():
            self.fail(f"texto fuera de celda: {data.strip()[:20]!r}")


def parse_html_structure(html: str) -> TableStructure:
    """HTML de estructura → TableStructure mediante el algoritmo de ocupación"""
    parser = _StructureParser(html)
    parser.feed(html)
    parser.close()
    if parser.stack:
        raise HtmlParseError(f"elementos sin cerrar: {parser.stack}", len(html))
    if not parser.tables:
        raise HtmlParseError("no hay elemento <table>", 0)

    occupied: Dict[Tuple[int, int], int] = {}
    cells: List[LogicalCell] = []
    n_rows = len(parser.rows)
    for r, row in enumerate(parser.rows):
        column = 0
        for rowspan, colspan, offset in row:
            while (r, column) in occupied:
                column += 1
            if r + rowspan > n_rows:
                raise HtmlParseError(f"rowspan={rowspan} en fila {r} excede las {n_rows} filas", offset)
            for dr in range(rowspan):
                for dc in range(colspan):
                    if (r + dr, column + dc) in occupied:
                        raise HtmlParseError(f"solape de ocupación en ({r + dr}, {column + dc})", offset)
                    occupied[(r + dr, column + dc)] = len(cells)
            cells.append(LogicalCell(r=r, c=column, rowspan=rowspan, colspan=colspan,
                                     is_header=r < parser.header_rows))
            column += colspan

    if n_rows == 0:
        return TableStructure.empty()
    if not occupied:
        raise HtmlParseError("filas sin celdas", parser.row_offsets[0])
    n_cols = max(c for _, c in occupied) + 1
    for r in range(n_rows):
        width = sum(1 for c in range(n_cols) if (r, c) in occupied)
        if width != n_cols:
            raise HtmlParseError(f"fila {r} irregular: {width} de {n_cols} columnas", parser.row_offsets[r])
    return TableStructure(R=n_rows, C=n_cols, H_hdr=parser.header_rows, cells=cells).validate()


# ------------------------------------------------------------------ árboles

def structure_to_tree(table: TableStructure) -> HtmlNode:
    """Árbol table → thead/tbody → tr → td equivalente a to_html"""
    def row_node(r: int) -> HtmlNode:
        return HtmlNode("tr", children=[HtmlNode("td", c.rowspan, c.colspan) for c in table.row_cells(r)])

    root = HtmlNode("table")
    if table.H_hdr > 0:
        root.children.append(HtmlNode("thead", children=[row_node(r) for r in range(table.H_hdr)]))
    root.children.append(HtmlNode("tbody", children=[row_node(r) for r in range(table.H_hdr, table.R)]))
    return root


def random_structure(R: int, C: int, rng: Rng, max_rowspan: int = 2, max_colspan: int = 2,
                     merge_prob: float = 0.3, H_hdr: Optional[int] = None) -> TableStructure:
    """Estructura aleatoria que tesela la rejilla (útil para datos sintéticos y pruebas)"""
    rs = np.ones((R, C), dtype=np.int64)
    cs = np.ones((R, C), dtype=np.int64)
    for r in range(R):
        for c in range(C):
            if rng.bernoulli(merge_prob):
                rs[r, c] = rng.integers(1, max_rowspan + 1)
                cs[r, c] = rng.integers(1, max_colspan + 1)
    spans = resolve_spans(rs, cs, R, C)
    header = rng.integers(0, R + 1) if H_hdr is None else H_hdr
    return build_structure(GridSpec.uniform(R, C, header), spans)
