"""Prompt assembly: instruction template + retrieved context + serial code.

Each retrieved chunk and the user's source file are fenced between
sentinel lines that carry a short content hash, so a parser can always
re-extract every section byte-exactly — even when the payload itself
contains fence-like text.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .corpus import CorpusManifest, token_estimate
from .errors import IntegrityError, InvalidInputError
from .index import RetrievalHit

CONTEXT_PLACEHOLDER = "{{context}}"
CODE_PLACEHOLDER = "{{code}}"
NO_CONTEXT_MARKER = "[no retrieved context]"

_CODE_BEGIN = "----- BEGIN SERIAL CODE {h} -----"
_CODE_END = "----- END SERIAL CODE {h} -----"
_CTX_BEGIN = "----- BEGIN CONTEXT {cid} {h} -----"
_CTX_END = "----- END CONTEXT {cid} {h} -----"


@dataclass(frozen=True)
class PromptBundle:
    instruction: str
    context_blocks: tuple[tuple[str, str], ...]
    serial_code: str
    rendered: str
    token_estimate: int


def default_template() -> str:
    return resources.files("omprag.data").joinpath("template.txt").read_text(encoding="utf-8")


def load_template(path: Path | str | None) -> str:
    if path is None:
        return default_template()
    return Path(path).read_text(encoding="utf-8")


def _content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _check_template(template: str) -> tuple[str, str, str]:
    ctx_pos = template.find(CONTEXT_PLACEHOLDER)
    code_pos = template.find(CODE_PLACEHOLDER)
    if ctx_pos < 0 or code_pos < 0:
        raise InvalidInputError(
            f"template must contain both {CONTEXT_PLACEHOLDER} and {CODE_PLACEHOLDER}"
        )
    if code_pos < ctx_pos:
        raise InvalidInputError("template must place the context section before the code section")
    lowered = template.lower()
    if "correct" not in lowered or not ("semantic" in lowered or "preserv" in lowered):
        raise InvalidInputError(
            "template must instruct the model to keep the output syntactically "
            "correct and semantically equivalent"
        )
    pre, rest = template.split(CONTEXT_PLACEHOLDER, 1)
    mid, post = rest.split(CODE_PLACEHOLDER, 1)
    return pre, mid, post


def render_context_block(chunk_id: str, body: str) -> str:
    h = _content_hash(body)
    return "\n".join(
        [_CTX_BEGIN.format(cid=chunk_id, h=h), body, _CTX_END.format(cid=chunk_id, h=h)]
    )


def render_code_block(serial_code: str) -> str:
    h = _content_hash(serial_code)
    return "\n".join([_CODE_BEGIN.format(h=h), serial_code, _CODE_END.format(h=h)])


def build_prompt(
    serial_code: str,
    hits: list[RetrievalHit],
    manifest: CorpusManifest,
    template: str | None = None,
) -> PromptBundle:
    """Assemble the full prompt; deterministic for identical inputs."""
    if not serial_code or not serial_code.strip():
        raise InvalidInputError("serial_code must be non-empty")
    template = template if template is not None else default_template()
    pre, mid, post = _check_template(template)

    ordered = sorted(hits, key=lambda h: h.rank)
    blocks: list[tuple[str, str]] = []
    for hit in ordered:
        chunk = manifest.chunk_by_id(hit.chunk_id)  # raises IntegrityError when unknown
        blocks.append((chunk.chunk_id, chunk.body))

    if blocks:
        context_section = "\n\n".join(render_context_block(cid, body) for cid, body in blocks)
    else:
        context_section = NO_CONTEXT_MARKER
    rendered = pre + context_section + mid + render_code_block(serial_code) + post
    return PromptBundle(
        instruction=pre,
        context_blocks=tuple(blocks),
        serial_code=serial_code,
        rendered=rendered,
        token_estimate=token_estimate(rendered),
    )


def extract_serial_code(rendered: str) -> str:
    """Recover the serial code section byte-exactly from a rendered prompt."""
    # The code block renders after every context block, so the last BEGIN
    # sentinel is the real one even if a context body mimics the pattern.
    begin = None
    for begin in re.finditer(r"^----- BEGIN SERIAL CODE ([0-9a-f]{12}) -----$", rendered, re.M):
        pass
    if not begin:
        raise IntegrityError("rendered prompt has no serial-code section")
    end_line = _CODE_END.format(h=begin.group(1))
    start = begin.end() + 1  # skip the newline after the sentinel
    stop = rendered.find("\n" + end_line, start)
    if stop < 0:
        raise IntegrityError("serial-code section is not terminated")
    return rendered[start:stop]


def extract_context_blocks(rendered: str) -> list[tuple[str, str]]:
    """Recover every (chunk_id, body) context block, in order of appearance."""
    blocks: list[tuple[str, str]] = []
    for match in re.finditer(
        r"^----- BEGIN CONTEXT (\S+) ([0-9a-f]{12}) -----$", rendered, re.M
    ):
        cid, h = match.group(1), match.group(2)
        end_line = _CTX_END.format(cid=cid, h=h)
        start = match.end() + 1
        stop = rendered.find("\n" + end_line, start)
        if stop < 0:
            raise IntegrityError(f"context block {cid!r} is not terminated")
        blocks.append((cid, rendered[start:stop]))
    return blocks
