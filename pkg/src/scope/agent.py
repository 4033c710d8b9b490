"""Conversational workflow agent: a four-module state machine over an LLM.

Each exchange submits (query, system inputs, system prompt, history) to a
chat backend and parses the structured reply, which carries an optional tool
invocation plus a textual response for the operator. The agent proposes, the
state machine disposes: a tool call is executed only if the current workflow
module allows it, and module transitions follow a fixed edge table, so a
drifting language model can never force an illegal step.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

from .candidates import CandidatePageState
from .errors import (
    BackendError,
    ConfigurationError,
    PolicyViolationError,
    ResponseFormatError,
)

INTERACTIVE = "InteractiveMode"
SEGMENTATION = "Segmentation"
SELECT_MASK = "SelectMask"
TRACKING = "Tracking"
MODULE_NAMES = (INTERACTIVE, SEGMENTATION, SELECT_MASK, TRACKING)

DEFAULT_HISTORY_LIMIT = 20

# legal module transitions keyed by (module, executed tool); anything not
# listed leaves the module unchanged
TRANSITIONS: dict[tuple[str, str], str] = {
    (INTERACTIVE, "segment"): SEGMENTATION,
    (SELECT_MASK, "segment"): SEGMENTATION,
    (TRACKING, "segment"): SEGMENTATION,
    (SELECT_MASK, "select"): TRACKING,
    (TRACKING, "stop"): INTERACTIVE,
}

_REPAIR_INSTRUCTION = (
    'Your previous reply was not a valid response object. Reply with exactly one JSON '
    'object carrying an optional "action" {"tool", "args"} and a required "text_response" '
    "string, nothing else. The operator said: "
)
_APOLOGY = "Sorry, I could not put together a valid response to that. Could you rephrase?"
_DEGRADED = "I'm having trouble reaching the language backend right now; please try again."


@dataclass(frozen=True)
class ArgSpec:
    type: type
    required: bool = True


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    args: Mapping[str, ArgSpec] = field(default_factory=dict)


@dataclass(frozen=True)
class WorkflowModule:
    """One phase of the interaction, with its own prompt, gate predicates
    (named session-state conditions), allowed tools, and few-shot examples."""

    name: str
    module_prompt: str
    entry_criteria: str
    exit_criteria: str
    allowed_tools: frozenset[str]
    examples: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class WorkflowConfig:
    modules: tuple[WorkflowModule, ...]
    tools: tuple[ToolSpec, ...]
    history_limit: int = DEFAULT_HISTORY_LIMIT


@dataclass(frozen=True)
class SystemPrompt:
    modules: tuple[WorkflowModule, ...]
    tools: tuple[ToolSpec, ...]
    in_context_examples: tuple[tuple[str, str, str], ...]  # (module, utterance, response)
    rules: tuple[str, ...]

    def serialized(self) -> str:
        """Deterministic text form: identical config yields identical bytes."""
        lines = ["# Workflow modules"]
        for module in self.modules:
            lines.append(f"## {module.name}")
            lines.append(module.module_prompt)
            lines.append(f"entry: {module.entry_criteria}")
            lines.append(f"exit: {module.exit_criteria}")
            lines.append("tools: " + ", ".join(sorted(module.allowed_tools)))
        lines.append("# Tools")
        for tool in self.tools:
            args = ", ".join(
                f"{name}: {spec.type.__name__}{'' if spec.required else '?'}"
                for name, spec in sorted(tool.args.items())
            )
            lines.append(f"- {tool.name}({args}): {tool.description}")
        lines.append("# Examples")
        for module, utterance, response in self.in_context_examples:
            lines.append(f"- [{module}] {utterance!r} -> {response}")
        lines.append("# Rules")
        lines.extend(f"- {rule}" for rule in self.rules)
        return "\n".join(lines)


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: dict

    def to_obj(self) -> dict:
        return {"tool": self.tool, "args": self.args}


@dataclass(frozen=True)
class AgentResponse:
    """Structured reply: an optional tool invocation plus operator-facing text."""

    text_response: str
    action: ToolCall | None = None

    def to_wire(self) -> str:
        obj: dict = {}
        if self.action is not None:
            obj["action"] = self.action.to_obj()
        obj["text_response"] = self.text_response
        return json.dumps(obj, sort_keys=True)


@dataclass(frozen=True)
class SessionState:
    """Agent-visible session state; history is append-only."""

    current_module: str = INTERACTIVE
    history: tuple[tuple[str, str], ...] = ()
    frame_index: int = 0
    page: CandidatePageState | None = None
    tracked_labels: tuple[str, ...] = ()
    pending_query: str | None = None

    def summary(self) -> str:
        """One-line textual S_i sent to the backend instead of raw images."""
        candidates = len(self.page.current_page()) if self.page else 0
        labels = ", ".join(self.tracked_labels) or "none"
        return (
            f"module={self.current_module} frame={self.frame_index} "
            f"candidates_on_page={candidates} tracked=[{labels}]"
        )


ToolHandler = Callable[[dict, SessionState], SessionState]


class ToolRegistry:
    """Tool specs plus their handlers; validates every call before execution."""

    def __init__(self) -> None:
        self._specs: dict[str, ToolSpec] = {}
        self._handlers: dict[str, ToolHandler] = {}

    def register(self, spec: ToolSpec, handler: ToolHandler) -> None:
        self._specs[spec.name] = spec
        self._handlers[spec.name] = handler

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def names(self) -> frozenset[str]:
        return frozenset(self._specs)

    def validate_args(self, name: str, args: dict) -> None:
        spec = self._specs.get(name)
        if spec is None:
            raise ResponseFormatError(f"unknown tool: {name!r}")
        for arg_name, arg_spec in spec.args.items():
            if arg_name not in args:
                if arg_spec.required:
                    raise ResponseFormatError(f"{name}: missing required argument {arg_name!r}")
                continue
            value = args[arg_name]
            if not isinstance(value, arg_spec.type) or isinstance(value, bool) and arg_spec.type is int:
                raise ResponseFormatError(
                    f"{name}: argument {arg_name!r} must be {arg_spec.type.__name__}"
                )
        unknown = set(args) - set(spec.args)
        if unknown:
            raise ResponseFormatError(f"{name}: unknown arguments {sorted(unknown)}")

    def invoke(self, call: ToolCall, state: SessionState) -> SessionState:
        return self._handlers[call.tool](call.args, state)


def default_tool_specs() -> tuple[ToolSpec, ...]:
    return (
        ToolSpec(
            name="segment",
            description="run text-prompt segmentation and display candidate masks",
            args={"query": ArgSpec(str)},
        ),
        ToolSpec(
            name="select",
            description="accept the numbered candidate from the current display page",
            args={"index": ArgSpec(int), "label": ArgSpec(str, required=False)},
        ),
        ToolSpec(name="next_page", description="advance to the next display iteration", args={}),
        ToolSpec(
            name="track",
            description="confirm tracking of the selected object, optionally naming it",
            args={"label": ArgSpec(str, required=False)},
        ),
        ToolSpec(name="stop", description="end the current activity and return to conversation", args={}),
    )


def default_workflow_config() -> WorkflowConfig:
    modules = (
        WorkflowModule(
            name=INTERACTIVE,
            module_prompt="Greet the operator and route their intent to the right phase.",
            entry_criteria="session_idle",
            exit_criteria="segmentation_requested",
            allowed_tools=frozenset({"segment", "stop"}),
            examples=(("segment the surgical instruments", "segment(query='surgical instruments')"),),
        ),
        WorkflowModule(
            name=SEGMENTATION,
            module_prompt="A segmentation query is running; refine it if asked.",
            entry_criteria="pending_segmentation_query",
            exit_criteria="candidates_displayed",
            allowed_tools=frozenset({"segment"}),
            examples=(("segment the forceps instead", "segment(query='forceps')"),),
        ),
        WorkflowModule(
            name=SELECT_MASK,
            module_prompt="Candidates are on display; resolve the operator's choice.",
            entry_criteria="candidates_displayed",
            exit_criteria="mask_accepted",
            allowed_tools=frozenset({"select", "next_page", "segment"}),
            examples=(
                ("the third one, label it suction", "select(index=3, label='suction')"),
                ("none of these", "next_page()"),
            ),
        ),
        WorkflowModule(
            name=TRACKING,
            module_prompt="Objects are being tracked; handle follow-up requests.",
            entry_criteria="mask_accepted",
            exit_criteria="session_idle",
            allowed_tools=frozenset({"segment", "track", "stop"}),
            examples=(("segment the tip of the suction", "segment(query='tip of the suction')"),),
        ),
    )
    return WorkflowConfig(modules=modules, tools=default_tool_specs())


def build_system_prompt(config: WorkflowConfig) -> SystemPrompt:
    """Assemble the serialized prompt; pure function of the configuration."""
    names = tuple(m.name for m in config.modules)
    if names != MODULE_NAMES:
        raise ConfigurationError(f"workflow must define modules {MODULE_NAMES}, got {names}")
    tool_names = {t.name for t in config.tools}
    for module in config.modules:
        missing = module.allowed_tools - tool_names
        if missing:
            raise ConfigurationError(f"module {module.name} references unregistered tools {sorted(missing)}")
    examples = tuple(
        (module.name, utterance, expected)
        for module in config.modules
        for utterance, expected in module.examples
    )
    rules = (
        'Reply with exactly one JSON object: an optional "action" {"tool": string, "args": object} '
        'and a required "text_response" string. No other keys, no prose outside the object.',
        "Only call tools allowed in the current module.",
        "Keep text_response short and speakable.",
    )
    return SystemPrompt(modules=config.modules, tools=config.tools, in_context_examples=examples, rules=rules)


def _allowed_tools(state: SessionState, config: WorkflowConfig) -> frozenset[str]:
    for module in config.modules:
        if module.name == state.current_module:
            return module.allowed_tools
    raise ConfigurationError(f"unknown module {state.current_module!r}")


def parse_agent_response(
    raw: str,
    state: SessionState,
    config: WorkflowConfig,
    registry: ToolRegistry,
) -> AgentResponse:
    """Parse and validate one wire-format reply against the current module."""
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ResponseFormatError(f"reply is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ResponseFormatError("reply must be a JSON object")
    unknown = set(obj) - {"action", "text_response"}
    if unknown:
        raise ResponseFormatError(f"unknown keys in reply: {sorted(unknown)}")
    text = obj.get("text_response")
    if not isinstance(text, str):
        raise ResponseFormatError('reply needs a string "text_response"')
    if "action" not in obj or obj["action"] is None:
        return AgentResponse(text_response=text)
    action = obj["action"]
    if not isinstance(action, dict) or set(action) - {"tool", "args"}:
        raise ResponseFormatError('action must be {"tool", "args"}')
    tool = action.get("tool")
    args = action.get("args", {})
    if not isinstance(tool, str) or not isinstance(args, dict):
        raise ResponseFormatError("action tool must be a string and args an object")
    if tool not in registry:
        raise ResponseFormatError(f"unknown tool: {tool!r}")
    registry.validate_args(tool, args)
    if tool not in _allowed_tools(state, config):
        raise PolicyViolationError(
            f"tool {tool!r} is not allowed in module {state.current_module}"
        )
    return AgentResponse(text_response=text, action=ToolCall(tool=tool, args=args))


def truncated_history(
    history: Sequence[tuple[str, str]], limit: int = DEFAULT_HISTORY_LIMIT
) -> list[dict]:
    """Last ``limit`` exchanges, with one summary line standing in for the rest."""
    items = list(history)
    payload = []
    if len(items) > limit:
        payload.append(
            {"q": "(summary)", "response": f"{len(items) - limit} earlier exchanges omitted"}
        )
        items = items[-limit:]
    payload.extend({"q": q, "response": r} for q, r in items)
    return payload


@dataclass(frozen=True)
class StepOutcome:
    response: AgentResponse
    state: SessionState
    module_before: str
    module_after: str
    degraded: bool = False
    tool_error: str | None = None


def step_transition(
    state: SessionState,
    query: str,
    llm,
    registry: ToolRegistry,
    config: WorkflowConfig,
    prompt: SystemPrompt | None = None,
) -> StepOutcome:
    """One full exchange: query the backend, validate, execute, transition.

    Backend timeouts get one retry before a degraded text-only reply; a
    malformed reply gets one repair attempt; tool failures are reported in
    the text channel and leave the module unchanged.
    """
    prompt = prompt or build_system_prompt(config)
    prompt_text = prompt.serialized() + "\n# System inputs\n" + state.summary()
    history_payload = tuple(truncated_history(state.history, config.history_limit))
    module_before = state.current_module
    degraded = False

    raw = None
    for attempt in range(2):
        try:
            raw = llm.respond(query, prompt_text, history_payload)
            break
        except BackendError:
            if attempt == 1:
                response = AgentResponse(text_response=_DEGRADED)
                new_state = replace(state, history=state.history + ((query, response.to_wire()),))
                return StepOutcome(response, new_state, module_before, module_before, degraded=True)

    try:
        response = parse_agent_response(raw, state, config, registry)
    except ResponseFormatError:
        try:
            repaired = llm.respond(_REPAIR_INSTRUCTION + query, prompt_text, history_payload)
            response = parse_agent_response(repaired, state, config, registry)
        except (ResponseFormatError, BackendError):
            response = AgentResponse(text_response=_APOLOGY)
        except PolicyViolationError:
            response = AgentResponse(
                text_response=f"That isn't available during {state.current_module}."
            )
    except PolicyViolationError:
        response = AgentResponse(
            text_response=f"That isn't available during {state.current_module}."
        )

    tool_error = None
    new_state = state
    module_after = module_before
    if response.action is not None:
        try:
            new_state = registry.invoke(response.action, state)
        except Exception as exc:
            tool_error = str(exc)
            response = AgentResponse(
                text_response=f"{response.text_response} (failed: {tool_error})"
            )
            new_state = state
        else:
            module_after = TRANSITIONS.get(
                (module_before, response.action.tool), module_before
            )
            new_state = replace(new_state, current_module=module_after)

    new_state = replace(new_state, history=new_state.history + ((query, response.to_wire()),))
    return StepOutcome(response, new_state, module_before, module_after, degraded, tool_error)


def notify_candidates_displayed(state: SessionState, page: CandidatePageState) -> SessionState:
    """Display-driven transition: showing a candidate page satisfies the
    Segmentation exit criteria and moves the workflow to SelectMask."""
    module = SELECT_MASK if state.current_module in (SEGMENTATION, SELECT_MASK) else state.current_module
    return replace(state, page=page, pending_query=None, current_module=module)
