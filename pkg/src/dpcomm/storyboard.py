"""Step-by-step storyboard scripts and their data-visibility invariants.

A script is an ordered list of captioned frames. Each frame names the actor
whose view it shows and tags every visible value as raw or perturbed, which
makes the privacy story mechanically checkable: local-DP scripts never show
a raw value to the organization or the recipient, central-DP scripts show
raw data inside the organization until the noise step and only perturbed
values to the recipient afterwards.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .concerns import DpLevel, ScenarioKind
from .errors import ValidationError


class Actor(enum.Enum):
    USER_DEVICE = "user-device"
    ORGANIZATION = "organization"
    RECIPIENT = "analyst/recipient"


class Tag(enum.Enum):
    RAW = "raw"
    PERTURBED = "perturbed"


@dataclass(frozen=True, slots=True)
class TaggedValue:
    """A value visible in a frame; ``slot`` tells the UI what to render."""

    slot: str
    label: str
    tag: Tag


@dataclass(frozen=True, slots=True)
class StoryboardStep:
    index: int
    caption: str
    actor: Actor
    visible_data: tuple[TaggedValue, ...]
    requires_user_input: bool = False
    phase: str = ""


@dataclass(frozen=True, slots=True)
class StoryboardScript:
    scenario: ScenarioKind
    dp_level: DpLevel
    steps: tuple[StoryboardStep, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "kind": "storyboard",
            "scenario": self.scenario.value,
            "dp_level": self.dp_level.value,
            "steps": [
                {
                    "index": s.index,
                    "caption": s.caption,
                    "actor": s.actor.value,
                    "requires_user_input": s.requires_user_input,
                    "phase": s.phase,
                    "visible_data": [
                        {"slot": v.slot, "label": v.label, "tag": v.tag.value}
                        for v in s.visible_data
                    ],
                }
                for s in self.steps
            ],
        }


_WORDING = {
    ScenarioKind.SALARY_NUMERIC: {
        "value": "salary",
        "enter": "You type your yearly salary into the survey form.",
        "query": "average salary",
    },
    ScenarioKind.LOCATION_GEO: {
        "value": "location",
        "enter": "You pick the map cell you are in.",
        "query": "visitor count per cell",
    },
}


def build_storyboard(scenario: ScenarioKind, dp_level: DpLevel) -> StoryboardScript:
    """Construct the script for one scenario and DP level."""
    words = _WORDING[scenario]
    value = words["value"]
    raw = TaggedValue("user_value", f"your {value}", Tag.RAW)
    noisy = TaggedValue("noisy_value", f"noisy {value}", Tag.PERTURBED)
    answer = TaggedValue("noisy_answer", "noisy answer", Tag.PERTURBED)
    aggregate = TaggedValue("aggregate", f"collected noisy {value} values", Tag.PERTURBED)

    if dp_level is DpLevel.LOCAL:
        steps = (
            StoryboardStep(
                0,
                words["enter"] + " Nothing has been sent yet.",
                Actor.USER_DEVICE,
                (raw,),
                requires_user_input=True,
                phase="input",
            ),
            StoryboardStep(
                1,
                f"Your device mixes random noise into the {value} right here, "
                "while the data is still yours.",
                Actor.USER_DEVICE,
                (raw, noisy),
                phase="perturb",
            ),
            StoryboardStep(
                2,
                f"Only the noisy {value} travels over the network; the organization "
                "receives nothing else.",
                Actor.ORGANIZATION,
                (noisy,),
                phase="transmit",
            ),
            StoryboardStep(
                3,
                "The organization aggregates the noisy values it collected from "
                "everyone.",
                Actor.ORGANIZATION,
                (noisy, aggregate),
                phase="aggregate",
            ),
        )
    else:
        steps = (
            StoryboardStep(
                0,
                words["enter"] + " It is sent exactly as you entered it.",
                Actor.USER_DEVICE,
                (raw,),
                requires_user_input=True,
                phase="input",
            ),
            StoryboardStep(
                1,
                f"The organization stores your exact {value} in a restricted database.",
                Actor.ORGANIZATION,
                (raw,),
                phase="store",
            ),
            StoryboardStep(
                2,
                f"A question arrives, for example the {words['query']}. The raw data "
                "stays inside the organization while the true answer is computed.",
                Actor.ORGANIZATION,
                (raw,),
                phase="query",
            ),
            StoryboardStep(
                3,
                "The organization mixes random noise into the true answer.",
                Actor.ORGANIZATION,
                (raw, answer),
                phase="noise",
            ),
            StoryboardStep(
                4,
                "The analyst receives only the noisy answer, never the stored data.",
                Actor.RECIPIENT,
                (answer,),
                phase="release",
            ),
        )
    return StoryboardScript(scenario=scenario, dp_level=dp_level, steps=steps)


def check_script(script: StoryboardScript) -> list[str]:
    """Return violations of the data-visibility invariants (empty = clean)."""
    violations: list[str] = []
    for i, step in enumerate(script.steps):
        if step.index != i:
            violations.append(f"step {i} carries index {step.index}")

    def raw_at(step: StoryboardStep) -> bool:
        return any(v.tag is Tag.RAW for v in step.visible_data)

    if script.dp_level is DpLevel.LOCAL:
        for step in script.steps:
            if step.actor in (Actor.ORGANIZATION, Actor.RECIPIENT) and raw_at(step):
                violations.append(
                    f"local-DP step {step.index} shows a raw value to {step.actor.value}"
                )
    else:
        query_steps = [s.index for s in script.steps if s.phase == "query"]
        noise_steps = [s.index for s in script.steps if s.phase == "noise"]
        if not query_steps or not noise_steps:
            violations.append("central-DP script needs a query step and a noise step")
        else:
            first_query = min(query_steps)
            raw_at_org_before = any(
                raw_at(s)
                for s in script.steps
                if s.actor is Actor.ORGANIZATION and s.index < first_query
            )
            if not raw_at_org_before:
                violations.append(
                    "central-DP script never shows raw data at the organization "
                    "before the query step"
                )
            noise_step = min(noise_steps)
            for step in script.steps:
                if step.index > noise_step and step.actor is Actor.RECIPIENT and raw_at(step):
                    violations.append(
                        f"central-DP step {step.index} leaks a raw value to the recipient"
                    )
    return violations


def assert_script_valid(script: StoryboardScript) -> None:
    violations = check_script(script)
    if violations:
        raise ValidationError("; ".join(violations))
