"""Customized text descriptions, one template per scenario and DP level.

Each template is a human-editable YAML file holding a preamble plus seven
sentences keyed by concern id. Rendering keeps the preamble and exactly the
sentences for the selected concerns. A mechanical validator enforces the
three required pieces of information: the collected data is named, the
disturbance stage matches the DP level, and every sentence explains why the
concerning party cannot infer the personal value.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from importlib import resources

import yaml

from .concerns import ConcernSet, DpLevel, ScenarioKind
from .errors import MissingTemplateError, ValidationError

# Stage wording is constrained mechanically so a template cannot contradict
# the mechanism it describes: local DP noises on the device, central DP
# noises at answer/sharing time.
LOCAL_STAGE_PHRASES = ("on your device", "before")
CENTRAL_STAGE_PHRASES = ("when answering", "when sharing")

INFERENCE_PHRASES = ("cannot", "can not", "can't", "never")

DATA_NAMES = {
    ScenarioKind.SALARY_NUMERIC: ("salary",),
    ScenarioKind.LOCATION_GEO: ("location",),
}

_FILENAMES = {
    (ScenarioKind.SALARY_NUMERIC, DpLevel.LOCAL): "salary_local.yaml",
    (ScenarioKind.SALARY_NUMERIC, DpLevel.CENTRAL): "salary_central.yaml",
    (ScenarioKind.LOCATION_GEO, DpLevel.LOCAL): "location_local.yaml",
    (ScenarioKind.LOCATION_GEO, DpLevel.CENTRAL): "location_central.yaml",
}


@dataclass(frozen=True)
class TextTemplate:
    scenario: ScenarioKind
    dp_level: DpLevel
    preamble: str
    sentences: dict[int, str]


@dataclass(frozen=True)
class TemplateValidationReport:
    valid: bool
    violations: tuple[str, ...]


def parse_template(raw: dict) -> TextTemplate:
    try:
        scenario = ScenarioKind(raw["scenario"])
        dp_level = DpLevel(raw["dp_level"])
        preamble = str(raw["preamble"]).strip()
        sentences = {int(k): str(v).strip() for k, v in dict(raw["sentences"]).items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed template: {exc}") from exc
    return TextTemplate(scenario, dp_level, preamble, sentences)


def load_template_file(path: str) -> TextTemplate:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValidationError(f"template file {path} is not a mapping")
    return parse_template(raw)


def validate_template(template: TextTemplate) -> TemplateValidationReport:
    """Check the three-piece content rule; returns violations, never raises."""
    violations: list[str] = []
    preamble = template.preamble.lower()

    names = DATA_NAMES[template.scenario]
    if not any(n in preamble for n in names):
        violations.append(
            f"preamble does not name the collected data ({' or '.join(names)})"
        )

    own, other = (
        (LOCAL_STAGE_PHRASES, CENTRAL_STAGE_PHRASES)
        if template.dp_level is DpLevel.LOCAL
        else (CENTRAL_STAGE_PHRASES, LOCAL_STAGE_PHRASES)
    )
    if not any(p in preamble for p in own):
        violations.append(
            f"preamble missing {template.dp_level.value}-DP disturbance-stage wording"
        )
    for phrase in other:
        if phrase in preamble:
            violations.append(
                f"stage mismatch: {template.dp_level.value}-DP preamble says {phrase!r}"
            )

    for concern_id in range(1, 8):
        sentence = template.sentences.get(concern_id, "").strip()
        if not sentence:
            violations.append(f"concern {concern_id} missing")
            continue
        if not any(p in sentence.lower() for p in INFERENCE_PHRASES):
            violations.append(
                f"concern {concern_id} lacks an inference-prevention clause"
            )
    extra = set(template.sentences) - set(range(1, 8))
    if extra:
        violations.append(f"unknown sentence keys {sorted(extra)}")

    return TemplateValidationReport(valid=not violations, violations=tuple(violations))


class TemplateRepository:
    """Loads templates from a directory and hot-reloads edited files."""

    def __init__(self, directory: str):
        self._dir = directory
        self._cache: dict[tuple[ScenarioKind, DpLevel], tuple[float, TextTemplate]] = {}

    def path_for(self, scenario: ScenarioKind, dp_level: DpLevel) -> str:
        return os.path.join(self._dir, _FILENAMES[(scenario, dp_level)])

    def get(self, scenario: ScenarioKind, dp_level: DpLevel) -> TextTemplate:
        key = (scenario, dp_level)
        path = self.path_for(scenario, dp_level)
        try:
            mtime = os.stat(path).st_mtime_ns
        except FileNotFoundError:
            raise MissingTemplateError(
                f"no template for ({scenario.value}, {dp_level.value})"
            ) from None
        cached = self._cache.get(key)
        if cached is not None and cached[0] == mtime:
            return cached[1]
        template = load_template_file(path)
        self._cache[key] = (mtime, template)
        return template

    def all_templates(self) -> list[TextTemplate]:
        return [self.get(s, l) for s, l in _FILENAMES]


def packaged_template_dir() -> str:
    return str(resources.files("dpcomm").joinpath("template_data"))


def default_repository() -> TemplateRepository:
    return TemplateRepository(packaged_template_dir())


def render_text_description(
    scenario: ScenarioKind,
    dp_level: DpLevel,
    selection: ConcernSet,
    repository: TemplateRepository | None = None,
) -> str:
    """Preamble plus the sentences for the selected concerns, one paragraph.

    Sentences appear in ascending concern-id order; an empty selection
    yields the preamble alone.
    """
    repo = repository or default_repository()
    template = repo.get(scenario, dp_level)
    chosen = [template.sentences[i] for i in sorted(selection.ids)]
    if not chosen:
        return template.preamble
    return template.preamble + "\n\n" + " ".join(chosen)
