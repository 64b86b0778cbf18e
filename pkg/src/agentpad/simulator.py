"""Deterministic discrete-event simulation of agent runs under attack.

A scenario names one agent server, one or more route servers, a set of peer
hosts with behavior profiles, and a route (revisits allowed). The simulator
is a single-threaded bus: it delivers every message synchronously, stamps it
with a monotonically increasing logical time, and records it in the trace.
Given the same scenario and seed the report is bit-identical; there is no
latency model because nothing in the protocol depends on timing.

Adversary profiles:

    counterfeit       overwrite a foreign register's data field (the key is
                      out of reach, so the signature cannot be redone)
    erase_foreign     delete a foreign register; the victim's keystore is
                      out of reach, so its key survives as evidence
    brainwash_replay  on a revisit, restore the bit-copy of the area the
                      host forwarded on its first visit
    orphan_key        behave honestly but report one extra random key
    key_reuse         attempt a second protection with a consumed key; the
                      protection layer blocks it locally

Sender identities are authentic by construction and no host can read another
host's keystore. Agents carry no log of their own (it would be as writable
as the data area), so replay detection rests entirely on the route servers.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from .cipher import (
    CipherParams,
    KeyConsumedError,
    OneTimeKey,
    ProtectionMode,
    Register,
    padded_octets,
    protect_register,
)
from .codec import AgentDataArea, decode_area, encode_area
from .protocol import (
    AgentServerState,
    AgentTransfer,
    KeyRequest,
    KeyResponse,
    PeerHostState,
    RouteLogEntry,
    RouteQuery,
    RouteAnswer,
    RouteServerState,
    Verdict,
    DiscardReason,
    VerificationReport,
    VisitIntent,
    encode_agent_transfer,
    encode_key_request,
    encode_key_response,
    encode_route_answer,
    encode_route_log_entry,
    encode_route_query,
    host_handle_agent,
    host_id,
    host_label,
    host_send_keys,
    merge_route_answers,
    route_get,
    route_log_visit,
    server_dispatch,
    server_reconcile,
)


class InvalidScenarioError(Exception):
    pass


class ChannelSecurity(Enum):
    SECURE = "secure"
    INSECURE = "insecure"


@dataclass(frozen=True)
class Channel:
    endpoints: tuple[str, str]
    security: ChannelSecurity


HONEST = "honest"
COUNTERFEIT = "counterfeit"
ERASE_FOREIGN = "erase_foreign"
BRAINWASH_REPLAY = "brainwash_replay"
ORPHAN_KEY = "orphan_key"
KEY_REUSE = "key_reuse"

PROFILE_KINDS = (HONEST, COUNTERFEIT, ERASE_FOREIGN, BRAINWASH_REPLAY, ORPHAN_KEY, KEY_REUSE)

MODE_WORDS = {"sign": ProtectionMode.SIGNATURE, "encrypt": ProtectionMode.ENCRYPTION}
REVISIT_ACTIONS = ("edit", "remove", "append", "idle")
POLICY_MODES = ("record", "abort")


@dataclass(frozen=True)
class BehaviorProfile:
    """How a host acts while it holds the agent; honest unless told otherwise."""

    kind: str = HONEST
    target_index: int | None = None
    forged_payload: bytes | None = None


@dataclass(frozen=True)
class HostConfig:
    id: str
    behavior: BehaviorProfile = BehaviorProfile()
    payload: bytes | None = None
    mode: ProtectionMode = ProtectionMode.SIGNATURE
    revisit: str = "edit"


@dataclass(frozen=True)
class Scenario:
    params: CipherParams
    seed: int
    agent_server: str
    route_servers: tuple[str, ...]
    hosts: tuple[HostConfig, ...]
    route: tuple[str, ...]
    channels: tuple[Channel, ...] = ()
    default_channel_security: ChannelSecurity = ChannelSecurity.SECURE
    policy_mode: str = "record"


@dataclass(frozen=True)
class SimEvent:
    """One delivered message."""

    time: int
    kind: str
    src: str
    dst: str
    security: str
    detail: dict

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "kind": self.kind,
            "src": self.src,
            "dst": self.dst,
            "security": self.security,
            "detail": self.detail,
        }


@dataclass
class SimReport:
    trace: list[SimEvent]
    verification: VerificationReport
    policy_violations: list[dict]
    assertions: dict[str, bool]

    def to_dict(self) -> dict:
        v = self.verification
        return {
            "trace": [ev.to_dict() for ev in self.trace],
            "verification": {
                "verdict": v.verdict.value,
                "reason": v.reason.value if v.reason else None,
                "attribution": [
                    {"register": ri, "host": host_label(h)} for ri, h in v.attribution
                ],
                "plaintexts": {str(ri): data.hex() for ri, data in v.plaintexts.items()},
            },
            "policy_violations": self.policy_violations,
            "assertions": self.assertions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# --- scenario files ----------------------------------------------------------


def _hex_or_none(value, where: str) -> bytes | None:
    if value is None:
        return None
    try:
        return bytes.fromhex(value)
    except (TypeError, ValueError):
        raise InvalidScenarioError(f"{where}: expected hex octets, got {value!r}") from None


def _behavior_from_dict(raw: dict, where: str) -> BehaviorProfile:
    extra = set(raw) - {"profile", "target_index", "forged_payload"}
    if extra:
        raise InvalidScenarioError(f"{where}: unknown behavior keys {sorted(extra)}")
    kind = raw.get("profile", HONEST)
    if kind not in PROFILE_KINDS:
        raise InvalidScenarioError(f"{where}: unknown profile {kind!r}")
    profile = BehaviorProfile(
        kind,
        raw.get("target_index"),
        _hex_or_none(raw.get("forged_payload"), f"{where}.forged_payload"),
    )
    if kind == COUNTERFEIT and (profile.target_index is None or profile.forged_payload is None):
        raise InvalidScenarioError(f"{where}: counterfeit needs target_index and forged_payload")
    if kind == ERASE_FOREIGN and profile.target_index is None:
        raise InvalidScenarioError(f"{where}: erase_foreign needs target_index")
    return profile


def scenario_from_dict(raw: dict) -> Scenario:
    """Build and validate a Scenario from its JSON form."""
    known = {
        "params", "seed", "agent_server", "route_servers", "hosts", "route",
        "channels", "default_channel_security", "policy_mode",
    }
    extra = set(raw) - known
    if extra:
        raise InvalidScenarioError(f"unknown scenario keys {sorted(extra)}")
    try:
        params = CipherParams(**raw.get("params", {}))
    except (TypeError, ValueError) as exc:
        raise InvalidScenarioError(f"bad params: {exc}") from None

    hosts = []
    for i, h in enumerate(raw.get("hosts", [])):
        where = f"hosts[{i}]"
        extra = set(h) - {"id", "behavior", "payload", "mode", "revisit"}
        if extra:
            raise InvalidScenarioError(f"{where}: unknown keys {sorted(extra)}")
        if "id" not in h:
            raise InvalidScenarioError(f"{where}: missing id")
        mode = h.get("mode", "sign")
        if mode not in MODE_WORDS:
            raise InvalidScenarioError(f"{where}: mode must be sign or encrypt")
        revisit = h.get("revisit", "edit")
        if revisit not in REVISIT_ACTIONS:
            raise InvalidScenarioError(f"{where}: revisit must be one of {REVISIT_ACTIONS}")
        hosts.append(
            HostConfig(
                h["id"],
                _behavior_from_dict(h.get("behavior", {}), f"{where}.behavior"),
                _hex_or_none(h.get("payload"), f"{where}.payload"),
                MODE_WORDS[mode],
                revisit,
            )
        )

    channels = []
    for i, c in enumerate(raw.get("channels", [])):
        where = f"channels[{i}]"
        if set(c) != {"endpoints", "security"} or len(c["endpoints"]) != 2:
            raise InvalidScenarioError(f"{where}: need endpoints [a, b] and security")
        try:
            security = ChannelSecurity(c["security"])
        except ValueError:
            raise InvalidScenarioError(f"{where}: bad security {c['security']!r}") from None
        channels.append(Channel(tuple(sorted(c["endpoints"])), security))

    try:
        default_security = ChannelSecurity(raw.get("default_channel_security", "secure"))
    except ValueError:
        raise InvalidScenarioError("bad default_channel_security") from None

    scenario = Scenario(
        params=params,
        seed=raw.get("seed", 0),
        agent_server=raw.get("agent_server", ""),
        route_servers=tuple(raw.get("route_servers", [])),
        hosts=tuple(hosts),
        route=tuple(raw.get("route", [])),
        channels=tuple(channels),
        default_channel_security=default_security,
        policy_mode=raw.get("policy_mode", "record"),
    )
    validate_scenario(scenario)
    return scenario


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "params": {"block_width_bits": scenario.params.block_width_bits},
        "seed": scenario.seed,
        "agent_server": scenario.agent_server,
        "route_servers": list(scenario.route_servers),
        "hosts": [
            {
                "id": cfg.id,
                "behavior": {
                    k: v
                    for k, v in {
                        "profile": cfg.behavior.kind,
                        "target_index": cfg.behavior.target_index,
                        "forged_payload": cfg.behavior.forged_payload.hex()
                        if cfg.behavior.forged_payload is not None
                        else None,
                    }.items()
                    if v is not None
                },
                "payload": cfg.payload.hex() if cfg.payload is not None else None,
                "mode": "sign" if cfg.mode is ProtectionMode.SIGNATURE else "encrypt",
                "revisit": cfg.revisit,
            }
            for cfg in scenario.hosts
        ],
        "route": list(scenario.route),
        "channels": [
            {"endpoints": list(ch.endpoints), "security": ch.security.value}
            for ch in scenario.channels
        ],
        "default_channel_security": scenario.default_channel_security.value,
        "policy_mode": scenario.policy_mode,
    }


def load_scenario(path: str | Path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidScenarioError(f"not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise InvalidScenarioError("scenario file must hold a JSON object")
    return scenario_from_dict(raw)


def validate_scenario(scenario: Scenario) -> None:
    if not 0 <= scenario.seed < 2**64:
        raise InvalidScenarioError("seed must fit in 64 bits")
    if scenario.policy_mode not in POLICY_MODES:
        raise InvalidScenarioError(f"policy_mode must be one of {POLICY_MODES}")
    if not scenario.agent_server:
        raise InvalidScenarioError("agent_server is required")
    if not scenario.route_servers:
        raise InvalidScenarioError("at least one route server is required")
    if not scenario.route:
        raise InvalidScenarioError("route must not be empty")
    if not scenario.hosts:
        raise InvalidScenarioError("at least one host is required")

    labels = [cfg.id for cfg in scenario.hosts]
    if len(set(labels)) != len(labels):
        raise InvalidScenarioError("duplicate host ids")
    everyone = [scenario.agent_server, *scenario.route_servers, *labels]
    if len(set(everyone)) != len(everyone):
        raise InvalidScenarioError("agent server, route servers, and hosts must be distinct")
    for label in everyone:
        try:
            host_id(label)
        except ValueError as exc:
            raise InvalidScenarioError(str(exc)) from None
    unknown = [label for label in scenario.route if label not in set(labels)]
    if unknown:
        raise InvalidScenarioError(f"route names unknown hosts: {unknown}")
    for ch in scenario.channels:
        for end in ch.endpoints:
            if end not in set(everyone):
                raise InvalidScenarioError(f"channel endpoint {end!r} is not a participant")


# --- channel policy ----------------------------------------------------------


def channel_between(scenario: Scenario, a: str, b: str) -> Channel:
    ends = tuple(sorted((a, b)))
    for ch in scenario.channels:
        if ch.endpoints == ends:
            return ch
    return Channel(ends, scenario.default_channel_security)


def enforce_channel_policy(message, channel: Channel) -> dict | None:
    """None when the delivery is allowed, else a violation record.

    Encryption keys are only as secret as the channel that carries them, so a
    KeyResponse holding any encryption-mode key over an insecure channel is a
    violation. Signature keys are past their one use and may travel in the
    clear; everything else always passes.
    """
    if isinstance(message, KeyResponse) and channel.security is ChannelSecurity.INSECURE:
        exposed = sum(1 for k in message.keys if k.mode is ProtectionMode.ENCRYPTION)
        if exposed:
            return {
                "kind": "insecure_key_transfer",
                "channel": list(channel.endpoints),
                "encryption_keys": exposed,
            }
    return None


# --- adversary behaviors -------------------------------------------------------


def apply_adversary(
    profile: BehaviorProfile,
    area: AgentDataArea,
    params: CipherParams,
    snapshot: bytes | None = None,
) -> tuple[AgentDataArea, dict | None]:
    """Area transformation for the tampering profiles.

    Counterfeit rewrites a foreign register's clear fields but cannot touch
    the masked signature; erase_foreign deletes the register outright;
    brainwash_replay swaps in the snapshot image when one is supplied. The
    orphan_key and key_reuse profiles act elsewhere (at key-response time and
    at protection time) and leave the area alone. Returns the new area and,
    when the configured target does not exist, a note record.
    """
    if profile.kind == BRAINWASH_REPLAY and snapshot is not None:
        return decode_area(snapshot, area.agent, params), None
    if profile.kind not in (COUNTERFEIT, ERASE_FOREIGN):
        return area, None
    idx = profile.target_index
    if idx is None or not 0 <= idx < len(area.registers):
        return area, {"kind": "adversary_target_missing", "target_index": idx}
    if profile.kind == ERASE_FOREIGN:
        registers = area.registers[:idx] + area.registers[idx + 1 :]
        return replace(area, registers=registers), None
    reg = area.registers[idx]
    forged = profile.forged_payload or b""
    padded = forged + b"\x00" * (padded_octets(len(forged), params) - len(forged))
    fake = Register(reg.mode, len(forged), padded, reg.masked_cw, reg.masked_mfd)
    registers = list(area.registers)
    registers[idx] = fake
    return replace(area, registers=tuple(registers)), None


# --- the event loop ------------------------------------------------------------


@dataclass
class _HostRuntime:
    config: HostConfig
    state: PeerHostState
    visits: int = 0
    snapshot: bytes | None = None


def _intent_for(cfg: HostConfig, first: bool) -> VisitIntent:
    if first:
        if cfg.payload is None:
            return VisitIntent("idle")
        return VisitIntent("append", cfg.payload)
    if cfg.revisit == "idle" or cfg.payload is None:
        return VisitIntent("idle")
    if cfg.revisit == "remove":
        return VisitIntent("remove")
    # fresh content for edit/append revisits, distinct per visit
    return VisitIntent(cfg.revisit, cfg.payload + b"/v2")


def run_scenario(scenario: Scenario) -> SimReport:
    """Play out a scenario end to end and reconcile the returned agent.

    Flow: dispatch along the route applying each host's behavior (every visit
    is reported to every route server before the agent moves on); on return,
    query the route servers, and if they agree, request keys from each logged
    host and reconcile. Pure in everything but its own local state: the same
    scenario yields a bit-identical report.
    """
    validate_scenario(scenario)
    params = scenario.params
    master = random.Random(scenario.seed)
    server_rng = random.Random(master.getrandbits(64))
    host_rngs = {cfg.id: random.Random(master.getrandbits(64)) for cfg in scenario.hosts}

    server = AgentServerState(host_id(scenario.agent_server), server_rng)
    rs_states = {label: RouteServerState() for label in scenario.route_servers}
    hosts = {
        cfg.id: _HostRuntime(cfg, PeerHostState(host_id(cfg.id), host_rngs[cfg.id], behavior=cfg.behavior))
        for cfg in scenario.hosts
    }

    trace: list[SimEvent] = []
    violations: list[dict] = []
    clock = 0

    def deliver(kind: str, src: str, dst: str, octets: int, detail: dict | None = None) -> SimEvent:
        nonlocal clock
        clock += 1
        security = channel_between(scenario, src, dst).security.value
        info = {"octets": octets}
        if detail:
            info.update(detail)
        event = SimEvent(clock, kind, src, dst, security, info)
        trace.append(event)
        return event

    server, area = server_dispatch(
        server,
        [host_id(label) for label in scenario.route],
        [host_id(label) for label in scenario.route_servers],
    )
    agent = area.agent
    image = encode_area(area, params)

    carrier = scenario.agent_server
    dispatch_time = None
    for hop, label in enumerate(scenario.route):
        raw = encode_agent_transfer(AgentTransfer(agent, image))
        event = deliver("agent_transfer", carrier, label, len(raw))
        if hop == 0:
            dispatch_time = event.time
        area = decode_area(image, agent, params)
        area = _apply_visit(hosts[label], area, rs_states, scenario, deliver, violations, params)
        image = encode_area(area, params)
        carrier = label

    raw = encode_agent_transfer(AgentTransfer(agent, image))
    return_time = deliver("agent_transfer", carrier, scenario.agent_server, len(raw)).time
    area = decode_area(image, agent, params)
    server.received_areas[agent] = area

    answers = []
    for label in scenario.route_servers:
        deliver("route_query", scenario.agent_server, label, len(encode_route_query(RouteQuery(agent))))
        logged = route_get(rs_states[label], agent)
        answer = RouteAnswer(tuple(logged))
        deliver(
            "route_answer",
            label,
            scenario.agent_server,
            len(encode_route_answer(answer)),
            {"hosts": [host_label(h) for h in logged]},
        )
        answers.append(logged)
    server.route_answers[agent] = answers

    merged = merge_route_answers(answers)
    if merged is None:
        # no trustworthy route, so no key requests can be driven from it
        verification = VerificationReport(Verdict.DISCARD, DiscardReason.ROUTE_MISMATCH)
    else:
        collected: dict[bytes, list[OneTimeKey]] = {}
        for hid in dict.fromkeys(merged):
            label = host_label(hid)
            runtime = hosts[label]
            deliver("key_request", scenario.agent_server, label, len(encode_key_request(KeyRequest(agent))))
            _, response = host_send_keys(runtime.state, server.id, agent)
            keys = list(response.keys)
            if runtime.config.behavior.kind == ORPHAN_KEY:
                bogus_bits = runtime.state.rng.randbytes(params.signature_width_bits // 8)
                keys.append(OneTimeKey(ProtectionMode.SIGNATURE, bogus_bits, runtime.state.id))
            response = KeyResponse(tuple(keys))
            channel = channel_between(scenario, label, scenario.agent_server)
            violation = enforce_channel_policy(response, channel)
            if violation:
                violation = {**violation, "aborted": scenario.policy_mode == "abort"}
                violations.append(violation)
                if scenario.policy_mode == "abort":
                    continue
            deliver(
                "key_response",
                label,
                scenario.agent_server,
                len(encode_key_response(response)),
                {"keys": len(keys)},
            )
            collected[hid] = keys
        server.collected_keys[agent] = collected
        verification = server_reconcile(server, agent, area, collected, merged, params)

    assertions = _trace_assertions(trace, dispatch_time, return_time, scenario, violations)
    return SimReport(trace, verification, violations, assertions)


def _apply_visit(
    runtime: _HostRuntime,
    area: AgentDataArea,
    rs_states: dict[str, RouteServerState],
    scenario: Scenario,
    deliver,
    violations: list[dict],
    params: CipherParams,
) -> AgentDataArea:
    cfg = runtime.config
    profile = cfg.behavior
    state = runtime.state
    first = runtime.visits == 0
    runtime.visits += 1
    log_octets = len(encode_route_log_entry(RouteLogEntry(area.agent, state.id)))

    if profile.kind == BRAINWASH_REPLAY and not first:
        # looks like any other visit to the route servers, then swaps the area
        for label in scenario.route_servers:
            route_log_visit(rs_states[label], area.agent, state.id)
            deliver("route_log", cfg.id, label, log_octets)
        restored, _ = apply_adversary(profile, area, params, runtime.snapshot)
        return restored

    if first and profile.kind in (COUNTERFEIT, ERASE_FOREIGN):
        area, note = apply_adversary(profile, area, params)
        if note:
            violations.append({**note, "host": cfg.id})

    intent = _intent_for(cfg, first)
    state, area = host_handle_agent(
        state, area, intent, cfg.mode, [rs_states[label] for label in scenario.route_servers], params
    )
    for label in scenario.route_servers:
        deliver("route_log", cfg.id, label, log_octets)

    if profile.kind == KEY_REUSE and first:
        keys = state.keys_for(area.agent)
        if keys:
            try:
                protect_register(cfg.payload or b"", 0, keys[-1], params)
            except KeyConsumedError:
                violations.append(
                    {
                        "kind": "key_reuse_blocked",
                        "host": cfg.id,
                        "note": "second use of a one-time key rejected locally",
                    }
                )
            else:
                violations.append({"kind": "key_reuse_not_blocked", "host": cfg.id})

    if profile.kind == BRAINWASH_REPLAY and first:
        runtime.snapshot = encode_area(area, params)
    return area


def _trace_assertions(
    trace: list[SimEvent],
    dispatch_time: int,
    return_time: int,
    scenario: Scenario,
    violations: list[dict],
) -> dict[str, bool]:
    """Mechanical checks over the delivered-message trace."""
    host_labels = {cfg.id for cfg in scenario.hosts}
    server = scenario.agent_server

    non_interactive = True
    for event in trace:
        if dispatch_time < event.time < return_time:
            if (event.src == server and event.dst in host_labels) or (
                event.dst == server and event.src in host_labels
            ):
                non_interactive = False

    key_release_after_return = all(
        event.time > return_time for event in trace if event.kind == "key_response"
    )

    nonempty_responses: dict[str, int] = {}
    for event in trace:
        if event.kind == "key_response" and event.detail.get("keys", 0) > 0:
            nonempty_responses[event.src] = nonempty_responses.get(event.src, 0) + 1
    drain_once = all(count <= 1 for count in nonempty_responses.values())

    assertions = {
        "non_interactive": non_interactive,
        "key_release_after_return": key_release_after_return,
        "drain_once": drain_once,
    }
    if any(cfg.behavior.kind == KEY_REUSE for cfg in scenario.hosts):
        assertions["key_reuse_blocked"] = any(
            v["kind"] == "key_reuse_blocked" for v in violations
        ) and not any(v["kind"] == "key_reuse_not_blocked" for v in violations)
    return assertions
