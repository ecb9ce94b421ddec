"""Text + image prompts for plan generation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from string import Template

from .grammar import verbs_for

TEMPLATES = ("instructional", "draft_persona")

ACTION_GLOSSES = {
    "ApproachDoor": "ApproachDoor(x): drive up to door x and stop right next to it.",
    "OpenDoor": "OpenDoor(x): swing door x open so it can be passed.",
    "GoThrough": "GoThrough(x): cross the already opened door x into the room beyond it.",
    "GoTo": "GoTo(r): drive to room r, which must be the current room or joined to it by an open door.",
}

CONNECTIONS_REQUEST = (
    "\nBefore the plan, list all door and room connections you see in the floor plan, one door per line, "
    "in the form D1: Room A <-> Room B.\n"
)


class PromptError(ValueError):
    pass


def _template(name: str) -> Template:
    text = (resources.files("floorplan_nav") / "data" / "prompts" / f"{name}.txt").read_text(encoding="utf-8")
    return Template(text)


def action_definitions(profile: str) -> str:
    return "\n".join(f"- {ACTION_GLOSSES[v]}" for v in verbs_for(profile))


@dataclass(frozen=True)
class PromptSpec:
    start_room: str
    goal_room: str
    template_id: str = "instructional"
    profile: str = "strict"
    ask_connections: bool = True
    image: bytes | str | Path | None = None

    def __post_init__(self):
        if self.template_id not in TEMPLATES:
            raise PromptError(f"unknown template {self.template_id!r}")
        if not str(self.start_room).strip() or not str(self.goal_room).strip():
            raise PromptError("start and goal rooms must be non-empty")
        if self.start_room == self.goal_room:
            raise PromptError("start and goal rooms must differ")

    def image_bytes(self) -> bytes:
        if self.image is None:
            return b""
        if isinstance(self.image, bytes):
            return self.image
        return Path(self.image).read_bytes()


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    image: bytes = b""
    image_mime: str = "image/png"

    @property
    def prompt_hash(self) -> str:
        """Content hash of text and image bytes (file names never enter it)."""
        h = hashlib.sha256()
        h.update(self.text.encode("utf-8"))
        h.update(b"\x00")
        h.update(self.image)
        return h.hexdigest()


def build_prompt(spec: PromptSpec) -> RenderedPrompt:
    values = {"start": spec.start_room, "goal": spec.goal_room}
    if spec.template_id == "instructional":
        extended = spec.profile == "extended"
        values.update(
            action_definitions=action_definitions(spec.profile),
            connections_request=CONNECTIONS_REQUEST if spec.ask_connections else "",
            room_arg_note=" and r is a room name" if extended else "",
            target_note=", or the room name for GoTo" if extended else "",
        )
    try:
        text = _template(spec.template_id).substitute(values)
    except KeyError as exc:
        raise PromptError(f"template {spec.template_id!r} is missing a value for {exc}") from None
    if "{" in text or "$" in text:
        raise PromptError("prompt still contains template placeholders")
    return RenderedPrompt(text=text, image=spec.image_bytes())
