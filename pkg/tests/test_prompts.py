"""Prompt templates: packaged data, placeholder binding, overrides."""

from __future__ import annotations

import pytest

from fuzzsmith.errors import MissingPlaceholderError
from fuzzsmith.prompts import (
    PromptTemplate,
    load_template,
    render_prompt,
    template_version,
)

FULL_CONTEXT = {
    PromptTemplate.SYSTEM: {"library_name": "libdemo.so"},
    PromptTemplate.ANALYSIS: {"function_name": "f", "signature": "void f(void);"},
    PromptTemplate.GENERATION: {
        "function_name": "f",
        "signature": "void f(void);",
        "compile_cmd": "clang++ ...",
    },
    PromptTemplate.COMPILE_REPAIR: {"function_name": "f", "stderr": "boom"},
    PromptTemplate.RUNTIME_REPAIR: {
        "function_name": "f",
        "verdict": "CRASH",
        "output": "stack trace",
    },
}


class TestTemplates:
    @pytest.mark.parametrize("template_id", list(PromptTemplate))
    def test_all_templates_ship_with_the_package(self, template_id):
        text = load_template(template_id)
        assert text.strip()

    @pytest.mark.parametrize("template_id", list(PromptTemplate))
    def test_render_binds_every_placeholder(self, template_id):
        rendered = render_prompt(template_id, FULL_CONTEXT[template_id])
        assert "${" not in rendered

    def test_context_values_are_injected_verbatim(self):
        stderr = 'driver.cc:3:1: error: expected ";" after $weird ${tokens}'
        rendered = render_prompt(
            PromptTemplate.COMPILE_REPAIR, {"function_name": "f", "stderr": stderr}
        )
        assert stderr in rendered

    def test_missing_placeholder_raises(self):
        with pytest.raises(MissingPlaceholderError):
            render_prompt(PromptTemplate.ANALYSIS, {"function_name": "f"})

    def test_version_is_nonempty(self):
        assert template_version().strip()

    def test_template_dir_override(self, tmp_path):
        (tmp_path / "SYSTEM.txt").write_text("custom system for ${library_name}")
        rendered = render_prompt(
            PromptTemplate.SYSTEM, {"library_name": "libx.so"}, template_dir=tmp_path
        )
        assert rendered == "custom system for libx.so"
        # Templates absent from the override directory fall back to packaged ones.
        packaged = render_prompt(
            PromptTemplate.ANALYSIS, FULL_CONTEXT[PromptTemplate.ANALYSIS], template_dir=tmp_path
        )
        assert "Target function: f" in packaged

    def test_version_override(self, tmp_path):
        (tmp_path / "VERSION").write_text("99-custom\n")
        assert template_version(tmp_path) == "99-custom"

    def test_phase_prompts_are_distinguishable(self):
        """Scripted tests key on wording unique to each phase."""
        analysis = render_prompt(PromptTemplate.ANALYSIS, FULL_CONTEXT[PromptTemplate.ANALYSIS])
        generation = render_prompt(PromptTemplate.GENERATION, FULL_CONTEXT[PromptTemplate.GENERATION])
        assert analysis.startswith("Target function: f\n")
        assert generation.startswith("Write a libFuzzer fuzz target")
        assert "Function: f\n" in generation
