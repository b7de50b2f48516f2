import logging
from typing import Dict, Optional

import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter
from openpyxl.utils.dataframe import dataframe_to_rows

from errors import GroundingError

logger = logging.getLogger(__name__)

HEADER_FONT = Font(bold=True, color="FFFFFF", size=11)
HEADER_FILL = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
TITLE_FONT = Font(bold=True, size=12)
TOTAL_FILL = PatternFill(start_color="FFE699", end_color="FFE699", fill_type="solid")
THIN_BORDER = Border(
    left=Side(style="thin"),
    right=Side(style="thin"),
    top=Side(style="thin"),
    bottom=Side(style="thin"),
)


def _write_table(ws, table: pd.DataFrame, title: Optional[str]) -> None:
    current_row = 1
    if title:
        ws.cell(row=current_row, column=1, value=title).font = TITLE_FONT
        current_row += 2

    header_row = current_row
    for r_offset, row in enumerate(dataframe_to_rows(table, index=True, header=True)):
        # dataframe_to_rows emits an extra row holding the index name; skip it
        if r_offset == 1:
            continue
        for c, value in enumerate(row, start=1):
            cell = ws.cell(row=current_row, column=c, value=value)
            cell.border = THIN_BORDER
            if current_row == header_row:
                cell.font = HEADER_FONT
                cell.fill = HEADER_FILL
                cell.alignment = Alignment(horizontal="center")
            elif c == 1:
                cell.font = Font(bold=True)
        current_row += 1

    if "Total" in table.columns or "Overall" in table.columns:
        last = "Total" if "Total" in table.columns else "Overall"
        col = list(table.columns).index(last) + 2
        for row in range(header_row + 1, current_row):
            ws.cell(row=row, column=col).fill = TOTAL_FILL

    ws.column_dimensions["A"].width = 18
    for c in range(2, len(table.columns) + 2):
        ws.column_dimensions[get_column_letter(c)].width = 12


def tables_to_xlsx(tables: Dict[str, pd.DataFrame], output_file_path: str, title: Optional[str] = None) -> None:
    """Write each table to its own sheet with styled headers"""
    if not tables:
        raise GroundingError("No tables to export")
    wb = Workbook()
    wb.remove(wb.active)
    for sheet_name, table in tables.items():
        ws = wb.create_sheet(title=sheet_name[:31])
        _write_table(ws, table, title)
    try:
        wb.save(output_file_path)
    except OSError as e:
        raise GroundingError(f"Cannot write {output_file_path}: {e}")
    logger.info("✓ Excel report saved to: %s", output_file_path)


def table_to_xlsx(table: pd.DataFrame, output_file_path: str, sheet_name: str = "Report",
                  title: Optional[str] = None) -> None:
    tables_to_xlsx({sheet_name: table}, output_file_path, title)
