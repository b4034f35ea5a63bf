"""
Reusable Excel formatting for batch summary workbooks
"""

from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter


class ExcelFormatter:
    """
    Handles all aesthetic formatting
    """

    VERDICT_FILLS = {
        "attacker": "FF9999",
        "benign": "C6EFCE",
        "error": "F4B084",
    }

    def __init__(self):
        self.blue_fill = PatternFill(start_color="4472C4", end_color="4472C4", fill_type="solid")
        self.orange_fill = PatternFill(start_color="F4B084", end_color="F4B084", fill_type="solid")
        self.white_bold_font = Font(bold=True, color="FFFFFF")
        self.bold_font = Font(bold=True)

    def apply_standard_formatting(self, worksheet, dataframe, total_identifier="Total",
                                  bold_columns=None, header_row=1, data_start_row=2):

        self.format_header_row(worksheet, dataframe, header_row)

        self.enable_filters(worksheet)

        self.format_data_rows(worksheet, dataframe, total_identifier, bold_columns, data_start_row)

        self.format_verdict_column(worksheet, dataframe, data_start_row)

        self.auto_adjust_column_widths(worksheet, dataframe)

    def format_header_row(self, worksheet, dataframe, header_row):
        """
        Format the header row with blue background and white bold text.
        """
        for col_num in range(1, len(dataframe.columns) + 1):
            cell = worksheet.cell(row=header_row, column=col_num)
            cell.fill = self.blue_fill
            cell.font = self.white_bold_font

    def enable_filters(self, worksheet):
        worksheet.auto_filter.ref = worksheet.dimensions

    def format_data_rows(self, worksheet, dataframe, total_identifier, bold_columns, data_start_row):
        """
        Bold selected columns; paint the Total row orange.
        """
        columns = list(dataframe.columns)
        bold_col_indices = [columns.index(name) + 1 for name in (bold_columns or []) if name in columns]

        for row_num in range(data_start_row, len(dataframe) + data_start_row):
            first_value = worksheet.cell(row=row_num, column=1).value

            if first_value == total_identifier:
                for col_num in range(1, len(columns) + 1):
                    cell = worksheet.cell(row=row_num, column=col_num)
                    cell.fill = self.orange_fill
                    cell.font = self.white_bold_font
            else:
                for col_idx in bold_col_indices:
                    worksheet.cell(row=row_num, column=col_idx).font = self.bold_font

    def format_verdict_column(self, worksheet, dataframe, data_start_row=2):
        """
        Color Verdict cells: red for attacker, green for benign, orange for errors.
        """
        if "Verdict" not in dataframe.columns:
            return
        col_idx = list(dataframe.columns).index("Verdict") + 1

        for row_num in range(data_start_row, len(dataframe) + data_start_row):
            cell = worksheet.cell(row=row_num, column=col_idx)
            color = self.VERDICT_FILLS.get(str(cell.value).lower())
            if color:
                cell.fill = PatternFill(start_color=color, end_color=color, fill_type="solid")
                cell.font = self.bold_font

    def auto_adjust_column_widths(self, worksheet, dataframe, min_width=8, max_width=48):
        for col_num, column in enumerate(dataframe.columns, start=1):
            column_letter = get_column_letter(col_num)

            max_length = len(str(column))
            for row_num in range(2, len(dataframe) + 2):
                cell = worksheet.cell(row=row_num, column=col_num)
                if cell.value:
                    max_length = max(max_length, len(str(cell.value)))
                cell.alignment = Alignment(vertical="top")

            worksheet.column_dimensions[column_letter].width = min(max(max_length + 2, min_width), max_width)
