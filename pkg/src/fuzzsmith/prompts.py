"""Versioned prompt templates with strict placeholder substitution.

Templates ship as package data (`templates/*.txt` plus a `VERSION`
marker) and can be overridden per deployment by pointing configuration
at a directory holding files with the same names. Rendering is
deterministic; an unbound ``${placeholder}`` raises
MissingPlaceholderError rather than leaking template syntax into a
prompt.
"""

from __future__ import annotations

from enum import Enum
from importlib import resources
from pathlib import Path
from string import Template
from typing import Mapping

from .errors import MissingPlaceholderError


class PromptTemplate(Enum):
    SYSTEM = "SYSTEM"
    ANALYSIS = "ANALYSIS"
    GENERATION = "GENERATION"
    COMPILE_REPAIR = "COMPILE_REPAIR"
    RUNTIME_REPAIR = "RUNTIME_REPAIR"


def _package_text(filename: str) -> str:
    return (
        resources.files("fuzzsmith").joinpath("templates", filename).read_text("utf-8")
    )


def template_version(template_dir: str | Path | None = None) -> str:
    if template_dir is not None:
        candidate = Path(template_dir) / "VERSION"
        if candidate.exists():
            return candidate.read_text("utf-8").strip()
    return _package_text("VERSION").strip()


def load_template(
    template_id: PromptTemplate, template_dir: str | Path | None = None
) -> str:
    filename = f"{template_id.value}.txt"
    if template_dir is not None:
        candidate = Path(template_dir) / filename
        if candidate.exists():
            return candidate.read_text("utf-8")
    return _package_text(filename)


def render_prompt(
    template_id: PromptTemplate,
    context: Mapping[str, str],
    template_dir: str | Path | None = None,
) -> str:
    """Substitute ``${placeholders}``; every placeholder must be bound."""
    text = load_template(template_id, template_dir)
    try:
        return Template(text).substitute(context)
    except KeyError as exc:
        raise MissingPlaceholderError(
            f"template {template_id.value} needs a value for {exc.args[0]!r}"
        ) from exc
    except ValueError as exc:
        raise MissingPlaceholderError(
            f"template {template_id.value} has malformed placeholder syntax: {exc}"
        ) from exc
