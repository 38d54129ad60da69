"""
Text report rendering from Jinja2 templates shipped in ``templates/``.
"""

import logging
import os
from pathlib import Path
from typing import Optional, Union

from jinja2 import Template

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"


class ReportRenderer:
    """Render named templates from the template directory to text."""

    def __init__(self, template_dir: Optional[Union[str, Path]] = None):
        self.logger = logging.getLogger(__name__)
        self.template_dir = Path(template_dir) if template_dir else TEMPLATE_DIR

    def _read_file_template(self, template_name: str) -> str:
        """Read a template file.

        Args:
            template_name: File name relative to the template directory
        """
        if not template_name:
            raise ValueError("Template name is required")

        template_path = self.template_dir / template_name
        if not os.path.exists(template_path):
            raise FileNotFoundError(f"Template file not found: {template_path}")

        with open(template_path, "r", encoding="utf-8") as f:
            return f.read()

    def render(self, template_name: str, **template_vars) -> str:
        self.logger.debug(f"Rendering {template_name}")
        template = Template(self._read_file_template(template_name), trim_blocks=True)
        return template.render(**template_vars)
