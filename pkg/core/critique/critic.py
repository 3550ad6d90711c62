"""
Critic Endpoints
Feedback labels, region reports and the three critic backends: scripted
test double, multipart HTTP wire protocol, OpenAI-compatible multimodal chat
"""

import base64
import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Protocol

import httpx
import numpy as np
from loguru import logger
from openai import APIError, OpenAI

from config.config import CriticConfig
from core.errors import ConfigError, CriticProtocolError, CriticTransportError, ParseError, PreconditionError
from core.io.images import encode_png

PROMPT_DIR = Path(__file__).parent / "prompts"
WILDCARD = "*"


class Label(str, Enum):
    """Closed feedback taxonomy"""

    WELL_RECONSTRUCTED = "well_reconstructed"
    BLURRY = "blurry"
    BODY_INTERSECTION = "body_intersection"
    GROUND_FUSION = "ground_fusion"
    OTHER = "other"

    @property
    def negative(self) -> bool:
        return self is not Label.WELL_RECONSTRUCTED


class PromptRole(str, Enum):
    FILTER = "filter"
    LOCALIZE = "localize"


@dataclass(frozen=True)
class CritiqueRegion:
    """Pixel rectangle [x0, x1) × [y0, y1) with a label and free-text note"""

    box: tuple[int, int, int, int]
    label: Label
    note: str = ""

    def clipped(self, width: int, height: int) -> "CritiqueRegion | None":
        x0, y0, x1, y1 = self.box
        box = (min(max(x0, 0), width), min(max(y0, 0), height), min(max(x1, 0), width), min(max(y1, 0), height))
        if box[2] <= box[0] or box[3] <= box[1]:
            return None
        return CritiqueRegion(box, self.label, self.note)

    def as_dict(self) -> dict[str, Any]:
        return {"box": list(self.box), "label": self.label.value, "note": self.note}


@dataclass
class CritiqueReport:
    """
    Critic output for one view in one round

    Reflection rounds count from 1. Round 0 is reserved for the frame filter,
    whose reports carry a verdict instead of regions.
    """

    view_id: str
    regions: list[CritiqueRegion] = field(default_factory=list)
    round: int = 1
    verdict: str | None = None
    note: str = ""

    def __post_init__(self):
        if self.round < 0 or (self.round == 0 and self.verdict is None):
            raise PreconditionError(f"round must be >= 1 (0 only for filter verdicts), got {self.round}")

    @property
    def negatives(self) -> list[CritiqueRegion]:
        return [r for r in self.regions if r.label.negative]

    @property
    def all_good(self) -> bool:
        return not self.negatives


def load_prompt(role: PromptRole, prompt_dir: str | Path | None = None) -> str:
    path = Path(prompt_dir or PROMPT_DIR) / f"{role.value}.txt"
    if not path.exists():
        raise ConfigError(f"Prompt template not found: {path}")
    return path.read_text(encoding="utf-8")


def extract_json(text: str) -> dict[str, Any]:
    """Parse the first {...} document in a reply; chat models often wrap it in prose"""
    start, stop = text.find("{"), text.rfind("}")
    if start < 0 or stop <= start:
        raise CriticProtocolError(f"No JSON document in critic reply: {text[:80]!r}")
    try:
        doc = json.loads(text[start : stop + 1])
    except json.JSONDecodeError as e:
        raise CriticProtocolError(f"Invalid JSON in critic reply: {e}") from e
    if not isinstance(doc, dict):
        raise CriticProtocolError("Critic reply must be a JSON object")
    return doc


class CriticEndpoint(Protocol):
    """Anything that maps one image plus a prompt role to a response document"""

    def query(self, image: np.ndarray, role: PromptRole, view_id: str, round: int) -> dict[str, Any]: ...


class ScriptedCritic:
    """
    Deterministic critic driven by a script file

    Each non-blank, non-comment line is `<round> <view_id> <json document>`;
    `*` matches any round or view and the first matching line wins. Filter
    queries use round 0. Unmatched queries get the all-good answer.
    """

    def __init__(self, entries: list[tuple[str, str, dict[str, Any]]] | None = None):
        self.entries = entries or []
        self.calls: list[tuple[str, str, int]] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedCritic":
        entries = []
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        for number, line in enumerate(lines, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split(maxsplit=2)
            if len(parts) != 3:
                raise ParseError("Expected '<round> <view_id> <json>'", path=path, line=number)
            round_key, view_key, payload = parts
            if round_key != WILDCARD and not round_key.isdigit():
                raise ParseError(f"Invalid round '{round_key}'", path=path, line=number)
            try:
                doc = json.loads(payload)
            except json.JSONDecodeError as e:
                raise ParseError(f"Invalid JSON: {e.msg}", path=path, line=number, offset=e.pos) from None
            entries.append((round_key, view_key, doc))
        logger.debug(f"scripted_critic_loaded path={path} entries={len(entries)}")
        return cls(entries)

    def query(self, image: np.ndarray, role: PromptRole, view_id: str, round: int) -> dict[str, Any]:
        self.calls.append((role.value, view_id, round))
        for round_key, view_key, doc in self.entries:
            if round_key not in (WILDCARD, str(round)) or view_key not in (WILDCARD, view_id):
                continue
            if role is PromptRole.FILTER and "verdict" not in doc:
                continue
            if role is PromptRole.LOCALIZE and "regions" not in doc:
                continue
            return json.loads(json.dumps(doc))
        return {"verdict": "keep"} if role is PromptRole.FILTER else {"regions": []}


class _RetryingCritic:
    """Shared prompt loading and retry policy for network critics"""

    def __init__(self, timeout_s: float = 60.0, retries: int = 2, prompt_dir: str | Path | None = None):
        self.timeout_s = timeout_s
        self.retries = retries
        self.prompts = {role: load_prompt(role, prompt_dir) for role in PromptRole}

    def _with_retries(self, send, description: str) -> dict[str, Any]:
        last: Exception | None = None
        for attempt in range(1, self.retries + 2):
            try:
                return send()
            except CriticTransportError as e:
                last = e
                logger.warning(f"critic_retry target={description} attempt={attempt} error={e}")
                if attempt <= self.retries:
                    time.sleep(min(0.5 * attempt, 2.0))
        raise CriticTransportError(f"Critic unreachable after {self.retries + 1} attempts: {last}")


class HttpCritic(_RetryingCritic):
    """
    Multipart wire protocol

    POST <url> with parts image (PNG), role, prompt, view_id and round; the
    response body is the JSON document.
    """

    def __init__(
        self,
        url: str,
        timeout_s: float = 60.0,
        retries: int = 2,
        prompt_dir: str | Path | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        super().__init__(timeout_s, retries, prompt_dir)
        self.url = url
        self.client = httpx.Client(timeout=timeout_s, transport=transport)

    def _post(self, files, data) -> dict[str, Any]:
        try:
            response = self.client.post(self.url, files=files, data=data)
        except httpx.TransportError as e:
            raise CriticTransportError(f"{type(e).__name__}: {e}") from e
        if response.status_code >= 500:
            raise CriticTransportError(f"HTTP {response.status_code} from {self.url}")
        if response.status_code >= 400:
            raise CriticProtocolError(f"HTTP {response.status_code} from {self.url}: {response.text[:200]}")
        return extract_json(response.text)

    def query(self, image: np.ndarray, role: PromptRole, view_id: str, round: int) -> dict[str, Any]:
        files = {"image": (f"{view_id}.png", encode_png(image), "image/png")}
        data = {"role": role.value, "prompt": self.prompts[role], "view_id": view_id, "round": str(round)}
        return self._with_retries(lambda: self._post(files, data), self.url)

    def close(self) -> None:
        self.client.close()


class OpenAICompatibleCritic(_RetryingCritic):
    """Same prompts sent to an OpenAI-compatible multimodal chat endpoint (e.g. a vLLM-served VL model)"""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str = "",
        timeout_s: float = 60.0,
        retries: int = 2,
        prompt_dir: str | Path | None = None,
    ):
        super().__init__(timeout_s, retries, prompt_dir)
        self.model = model
        self.client = OpenAI(base_url=base_url, api_key=api_key or "not-needed", timeout=timeout_s, max_retries=0)
        logger.info(f"critic_client model={model} url={base_url}")

    def _chat(self, role: PromptRole, image: np.ndarray) -> dict[str, Any]:
        data_url = "data:image/png;base64," + base64.b64encode(encode_png(image)).decode("ascii")
        try:
            response = self.client.chat.completions.create(
                model=self.model,
                temperature=0.0,
                messages=[
                    {
                        "role": "user",
                        "content": [
                            {"type": "text", "text": self.prompts[role]},
                            {"type": "image_url", "image_url": {"url": data_url}},
                        ],
                    }
                ],
            )
        except APIError as e:
            raise CriticTransportError(f"{type(e).__name__}: {e}") from e
        return extract_json(response.choices[0].message.content or "")

    def query(self, image: np.ndarray, role: PromptRole, view_id: str, round: int) -> dict[str, Any]:
        return self._with_retries(lambda: self._chat(role, image), self.model)


def make_critic(cfg: CriticConfig) -> CriticEndpoint:
    if cfg.backend == "scripted":
        if not cfg.script_path:
            return ScriptedCritic()
        return ScriptedCritic.from_file(cfg.script_path)
    if cfg.backend == "http":
        return HttpCritic(cfg.url, cfg.timeout_s, cfg.retries, cfg.prompt_dir)
    return OpenAICompatibleCritic(cfg.url, cfg.model, cfg.api_key, cfg.timeout_s, cfg.retries, cfg.prompt_dir)
