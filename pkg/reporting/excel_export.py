"""
Excel Export Module
Export evaluation metrics to Excel workbooks

Features:
- Summary sheet with accuracy, balanced accuracy and macro F1
- Confusion matrix sheet over the full label space
- Optional per-rarity-group sheet
"""

import io
from datetime import datetime
from typing import Dict, Optional

import openpyxl
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side

from reporting.metrics import MetricsReport


class ExcelExporter:
    """Excel export for evaluation reports"""

    def __init__(self):
        self.wb = openpyxl.Workbook()
        self._setup_styles()

    def _setup_styles(self):
        """Setup Excel cell styles"""
        # Header style
        self.header_font = Font(name='Arial', size=12, bold=True, color='FFFFFF')
        self.header_fill = PatternFill(start_color='366092', end_color='366092', fill_type='solid')
        self.header_alignment = Alignment(horizontal='center', vertical='center')

        self.data_font = Font(name='Arial', size=10)
        self.number_alignment = Alignment(horizontal='right', vertical='center')

        self.thin_border = Border(
            left=Side(style='thin'),
            right=Side(style='thin'),
            top=Side(style='thin'),
            bottom=Side(style='thin')
        )

    def _header_row(self, ws, row: int, headers) -> None:
        for col, header in enumerate(headers, 1):
            cell = ws.cell(row=row, column=col, value=header)
            cell.font = self.header_font
            cell.fill = self.header_fill
            cell.alignment = self.header_alignment
            cell.border = self.thin_border

    def export_metrics(self, report: MetricsReport,
                       per_group: Optional[Dict[str, MetricsReport]] = None) -> bytes:
        """Workbook bytes for a metrics report and optional rarity-group reports."""
        if 'Sheet' in self.wb.sheetnames:
            self.wb.remove(self.wb['Sheet'])

        self._create_summary_sheet(report)
        self._create_confusion_sheet(report)
        if per_group:
            self._create_group_sheet(per_group)

        buffer = io.BytesIO()
        self.wb.save(buffer)
        buffer.seek(0)
        return buffer.read()

    def _create_summary_sheet(self, report: MetricsReport):
        ws = self.wb.create_sheet("Summary")

        ws['A1'] = f"Evaluation Summary - {report.task}"
        ws['A1'].font = Font(name='Arial', size=16, bold=True)
        ws.merge_cells('A1:B1')
        ws['A2'] = f"Generated {datetime.now().strftime('%Y-%m-%d')}"
        ws['A2'].font = self.data_font

        self._header_row(ws, 4, ['Metric', 'Value'])
        rows = [
            ('Examples', report.n),
            ('Accuracy', report.accuracy),
            ('Balanced accuracy', report.balanced_accuracy),
            ('Macro F1', report.macro_f1),
        ]
        for offset, (name, value) in enumerate(rows, start=5):
            ws.cell(row=offset, column=1, value=name).border = self.thin_border
            cell = ws.cell(row=offset, column=2, value=value)
            cell.border = self.thin_border
            cell.alignment = self.number_alignment
            if isinstance(value, float):
                cell.number_format = '0.0000'

        ws.column_dimensions['A'].width = 25
        ws.column_dimensions['B'].width = 15

    def _create_confusion_sheet(self, report: MetricsReport):
        ws = self.wb.create_sheet("Confusion Matrix")
        ws['A1'] = "Rows: gold label, columns: predicted label"
        ws['A1'].font = Font(bold=True)

        self._header_row(ws, 3, ['Gold \\ Pred'] + list(report.labels))
        for i, (label, counts) in enumerate(zip(report.labels, report.confusion), start=4):
            ws.cell(row=i, column=1, value=label).font = Font(bold=True)
            for j, count in enumerate(counts, start=2):
                cell = ws.cell(row=i, column=j, value=count)
                cell.border = self.thin_border
                cell.alignment = self.number_alignment

        ws.column_dimensions['A'].width = 15

    def _create_group_sheet(self, per_group: Dict[str, MetricsReport]):
        ws = self.wb.create_sheet("Rarity Groups")
        self._header_row(ws, 1, ['Group', 'Examples', 'Accuracy', 'Balanced accuracy', 'Macro F1'])
        for row, (group, report) in enumerate(sorted(per_group.items()), start=2):
            values = [group, report.n, report.accuracy, report.balanced_accuracy, report.macro_f1]
            for col, value in enumerate(values, start=1):
                cell = ws.cell(row=row, column=col, value=value)
                cell.border = self.thin_border
                if isinstance(value, float):
                    cell.number_format = '0.0000'

        for column in 'ABCDE':
            ws.column_dimensions[column].width = 18
