"""Grid navigation environment with instruction-following episodes.

A route is a polyline over an integer grid: a start point, straight segments
joined at turning points, and a destination with its landmark. The agent
follows numbered instructions, acting in one of two action spaces (absolute
compass turns, or egocentric relative turns); the action-space choice is the
rule axis the generalization experiments shift. Every wrong action costs -1
and is retried at the same coordinate up to a 2-attempt cap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from random import Random
from typing import Optional, Sequence

from . import prompts
from .answers import parse_answer_text

HEADINGS = (
    "north",
    "northeast",
    "east",
    "southeast",
    "south",
    "southwest",
    "west",
    "northwest",
)
_DEG = {h: i * 45 for i, h in enumerate(HEADINGS)}
_VEC = {
    "north": (0, 1),
    "northeast": (1, 1),
    "east": (1, 0),
    "southeast": (1, -1),
    "south": (0, -1),
    "southwest": (-1, -1),
    "west": (-1, 0),
    "northwest": (-1, 1),
}

BUCKETS = (
    "front",
    "right front",
    "right",
    "right behind",
    "behind",
    "left behind",
    "left",
    "left front",
)

RELATIVE_WORDS = {"slightly right": 45, "right": 90, "slightly left": -45, "left": -90}
ACTION_SPACES = ("absolute", "relative")

NO_LANDMARKS_LINE = "No landmarks nearby;"
INTERSECTION_CLAUSE = "You observe an intersection"

VERIFY_CAP = 2  # wrong attempts allowed per coordinate


class SchemaError(ValueError):
    """Route file violates the schema; message names the field path."""


class InvariantError(ValueError):
    """Route data is well-formed but geometrically/logically inconsistent."""


def heading_degrees(heading: str) -> int:
    if heading not in _DEG:
        raise ValueError(f"unknown heading {heading!r}")
    return _DEG[heading]


def rotate_heading(heading: str, delta_degrees: int) -> str:
    if delta_degrees % 45 != 0:
        raise ValueError("turns are multiples of 45 degrees")
    return HEADINGS[((heading_degrees(heading) + delta_degrees) % 360) // 45]


def turn_delta(from_heading: str, to_heading: str) -> int:
    """Signed delta in (-180, 180], with 180 mapped to the right side."""
    raw = (heading_degrees(to_heading) - heading_degrees(from_heading)) % 360
    return raw if raw <= 180 else raw - 360


def relative_bucket(heading: str, bearing: str) -> str:
    """Egocentric descriptor of a world bearing as seen under a heading."""
    diff = (heading_degrees(bearing) - heading_degrees(heading)) % 360
    return BUCKETS[diff // 45]


# --- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class NavAction:
    kind: str  # "forward" | "turn" | "stop"
    arg: Optional[str] = None

    def render(self) -> str:
        if self.kind == "turn":
            return f"turn_direction({self.arg})"
        return f"{self.kind}()"


def parse_action(text: str) -> Optional[NavAction]:
    stripped = text.strip()
    if stripped == "forward()":
        return NavAction("forward")
    if stripped == "stop()":
        return NavAction("stop")
    if stripped.startswith("turn_direction(") and stripped.endswith(")"):
        return NavAction("turn", stripped[len("turn_direction(") : -1].strip())
    return None


# --- routes ------------------------------------------------------------------


@dataclass(frozen=True)
class Landmark:
    name: str
    waypoint: int
    bearing: str


@dataclass(frozen=True)
class Route:
    waypoints: tuple[tuple[int, int], ...]
    start_heading: str
    turns: tuple[tuple[int, str], ...]  # (waypoint index, post-turn heading); index 0 first
    landmarks: tuple[Landmark, ...]
    destination: str
    instructions: tuple[str, ...]
    expert_actions: tuple[str, ...]  # absolute-space action strings, ends with stop()
    max_straight_road_length: int
    version: int = 1

    @property
    def destination_index(self) -> int:
        return len(self.waypoints) - 1

    def turn_at(self, index: int) -> Optional[str]:
        for i, h in self.turns:
            if i == index:
                return h
        return None

    def is_intersection(self, index: int) -> bool:
        return index != 0 and any(i == index for i, _ in self.turns)

    def landmarks_at(self, index: int) -> tuple[Landmark, ...]:
        return tuple(lm for lm in self.landmarks if lm.waypoint == index)

    def plan(self) -> tuple[tuple, ...]:
        """Alternating ("turn", heading) / ("move", end_index) items.

        One item per instruction: initial turn, then move/turn pairs at each
        interior turning point, then the final move to the destination.
        """
        items: list[tuple] = [("turn", self.turns[0][1])]
        interior = [(i, h) for i, h in self.turns if i != 0]
        for i, h in interior:
            items.append(("move", i))
            items.append(("turn", h))
        items.append(("move", self.destination_index))
        return tuple(items)


DEFAULT_LANDMARK_POOL = (
    "Hotel 32One",
    "Dragon Gate Chinatown SF",
    "Café de la Presse",
    "Korean War Memorial",
    "9/11 Memorial & Museum",
    "Shuka",
    "The Dutch",
    "Lola Taverna",
    "Union Square Pharmacy",
    "Riverside Books",
    "Grand Central Deli",
    "Museum of Glass",
    "Old Harbor Lighthouse",
    "City Garden Cafe",
    "North Gate Market",
    "Silver Line Gym",
)

HOLDOUT_LANDMARK_POOL = (
    "Aurora Teahouse",
    "Basilica Bookshop",
    "Copper Kettle Diner",
    "Dockside Records",
    "Emerald Cinema",
    "Fountain Plaza Hotel",
    "Granite Bank Hall",
    "Harborview Aquarium",
    "Ivy Street Bakery",
    "Juniper Gallery",
    "Kingsway Arcade",
    "Lantern Hill Chapel",
)


@dataclass(frozen=True)
class RouteConfig:
    turning_points: int = 2
    min_straight: int = 1
    max_straight_road_length: int = 4
    landmark_pool: tuple[str, ...] = DEFAULT_LANDMARK_POOL
    landmark_probability: float = 1.0
    allowed_turns: tuple[int, ...] = (-90, -45, 45, 90)

    def __post_init__(self):
        if self.turning_points < 0:
            raise ValueError("turning_points must be >= 0")
        if not (1 <= self.min_straight <= self.max_straight_road_length):
            raise ValueError("need 1 <= min_straight <= max_straight_road_length")
        if not 0.0 <= self.landmark_probability <= 1.0:
            raise ValueError("landmark_probability must be in [0, 1]")
        for d in self.allowed_turns:
            if d % 45 != 0 or d == 0 or not -135 <= d <= 180:
                raise ValueError("allowed_turns must be nonzero multiples of 45 in (-180, 180]")
        if len(self.landmark_pool) < self.turning_points + 1:
            raise ValueError("landmark pool smaller than turning_points + 1")


def _relative_turn_word(delta: int) -> str:
    if delta == 45:
        return "slightly right"
    if delta == -45:
        return "slightly left"
    if delta > 0:
        return "right"
    return "left"


def _render_instructions(
    first_heading: str,
    first_delta: int,
    segments: Sequence[dict],
) -> tuple[str, ...]:
    """segments: per-segment dicts with end landmark info and the next turn."""
    out = [f"First, turn {_relative_turn_word(first_delta)} to face {first_heading}."]
    for seg in segments:
        if seg["is_destination"]:
            out.append(
                f"Move forward until the destination {seg['landmark']} is on your {seg['descriptor']}."
            )
            continue
        if seg["landmark"] is None:
            out.append("Move forward until you reach next intersection.")
        else:
            out.append(
                "Move forward until you reach the next intersection where "
                f"{seg['landmark']} is on your {seg['descriptor']}."
            )
        out.append(f"Turn {_relative_turn_word(seg['turn_delta'])} to face {seg['turn_heading']}.")
    return tuple(out)


def generate_route(seed: int, config: RouteConfig | None = None) -> Route:
    """Sample a route; same seed and config give the same route."""
    cfg = config if config is not None else RouteConfig()
    rng = Random(seed)

    start_heading = rng.choice(HEADINGS)
    first_delta = rng.choice(cfg.allowed_turns)
    directions = [rotate_heading(start_heading, first_delta)]
    turn_deltas = []
    for _ in range(cfg.turning_points):
        delta = rng.choice(cfg.allowed_turns)
        turn_deltas.append(delta)
        directions.append(rotate_heading(directions[-1], delta))

    lengths = [
        rng.randint(cfg.min_straight, cfg.max_straight_road_length)
        for _ in range(cfg.turning_points + 1)
    ]

    names = rng.sample(cfg.landmark_pool, cfg.turning_points + 1)
    waypoints = [(0, 0)]
    turns = [(0, directions[0])]
    landmarks = []
    segments = []
    index = 0
    for seg_i, (direction, length) in enumerate(zip(directions, lengths)):
        dx, dy = _VEC[direction]
        for _ in range(length):
            x, y = waypoints[-1]
            waypoints.append((x + dx, y + dy))
        index += length
        is_destination = seg_i == cfg.turning_points
        if is_destination:
            bearing = rotate_heading(direction, 45 * rng.randrange(8))
            landmarks.append(Landmark(names[seg_i], index, bearing))
            segments.append(
                {
                    "is_destination": True,
                    "landmark": names[seg_i],
                    "descriptor": relative_bucket(direction, bearing),
                }
            )
        else:
            turns.append((index, directions[seg_i + 1]))
            has_landmark = rng.random() < cfg.landmark_probability
            landmark_name = None
            descriptor = None
            if has_landmark:
                bearing = rotate_heading(direction, 45 * rng.randrange(8))
                landmarks.append(Landmark(names[seg_i], index, bearing))
                landmark_name = names[seg_i]
                descriptor = relative_bucket(direction, bearing)
            segments.append(
                {
                    "is_destination": False,
                    "landmark": landmark_name,
                    "descriptor": descriptor,
                    "turn_delta": turn_deltas[seg_i],
                    "turn_heading": directions[seg_i + 1],
                }
            )

    instructions = _render_instructions(directions[0], first_delta, segments)
    expert = [NavAction("turn", d).render() for d in [directions[0]]]
    for seg_i, length in enumerate(lengths):
        expert.extend(NavAction("forward").render() for _ in range(length))
        if seg_i < cfg.turning_points:
            expert.append(NavAction("turn", directions[seg_i + 1]).render())
    expert.append(NavAction("stop").render())

    route = Route(
        waypoints=tuple(waypoints),
        start_heading=start_heading,
        turns=tuple(turns),
        landmarks=tuple(landmarks),
        destination=names[-1],
        instructions=instructions,
        expert_actions=tuple(expert),
        max_straight_road_length=cfg.max_straight_road_length,
    )
    validate_route(route)
    return route


def demo_route() -> Route:
    """Small hand-built route used in docs and golden tests.

    The stored instruction strings are fixture data and are not regenerated
    from geometry; two of the turn words deliberately disagree with the
    left/right convention the generator uses.
    """
    return Route(
        waypoints=((0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (3, 2), (4, 2)),
        start_heading="south",
        turns=((0, "east"), (2, "north"), (4, "east")),
        landmarks=(
            Landmark("Hotel 32One", 2, "southwest"),
            Landmark("Dragon Gate Chinatown SF", 4, "northeast"),
            Landmark("Café de la Presse", 6, "south"),
        ),
        destination="Café de la Presse",
        instructions=(
            "First, turn left to face east.",
            "Move forward until you reach the next intersection where "
            "Hotel 32One is on your right behind.",
            "Turn right to face north.",
            "Move forward until you reach the next intersection where "
            "Dragon Gate Chinatown SF is on your right front.",
            "Turn left to face east.",
            "Move forward until the destination Café de la Presse is on your right.",
        ),
        expert_actions=(
            "turn_direction(east)",
            "forward()",
            "forward()",
            "turn_direction(north)",
            "forward()",
            "forward()",
            "turn_direction(east)",
            "forward()",
            "forward()",
            "stop()",
        ),
        max_straight_road_length=4,
    )


# --- route (de)serialization -------------------------------------------------


def route_to_dict(route: Route) -> dict:
    return {
        "version": route.version,
        "start_heading": route.start_heading,
        "waypoints": [list(w) for w in route.waypoints],
        "turns": [[i, h] for i, h in route.turns],
        "landmarks": [
            {"name": lm.name, "waypoint": lm.waypoint, "bearing": lm.bearing}
            for lm in route.landmarks
        ],
        "destination": route.destination,
        "instructions": list(route.instructions),
        "expert_actions": list(route.expert_actions),
        "max_straight_road_length": route.max_straight_road_length,
    }


_ROUTE_KEYS = {
    "version",
    "start_heading",
    "waypoints",
    "turns",
    "landmarks",
    "destination",
    "instructions",
    "expert_actions",
    "max_straight_road_length",
}


def _require(condition: bool, path: str, message: str):
    if not condition:
        raise SchemaError(f"{path}: {message}")


def route_from_dict(data: dict) -> Route:
    _require(isinstance(data, dict), "$", "route must be a json object")
    unknown = set(data) - _ROUTE_KEYS
    _require(not unknown, sorted(unknown)[0] if unknown else "$", "unknown key")
    missing = _ROUTE_KEYS - set(data)
    _require(not missing, sorted(missing)[0] if missing else "$", "missing key")
    _require(data["version"] == 1, "version", "unsupported version")
    _require(isinstance(data["start_heading"], str) and data["start_heading"] in HEADINGS,
             "start_heading", "must be a compass heading")

    waypoints = data["waypoints"]
    _require(isinstance(waypoints, list) and len(waypoints) >= 2, "waypoints", "need >= 2 entries")
    parsed_waypoints = []
    for i, wp in enumerate(waypoints):
        ok = (
            isinstance(wp, list)
            and len(wp) == 2
            and all(isinstance(v, int) and not isinstance(v, bool) for v in wp)
        )
        _require(ok, f"waypoints[{i}]", "must be [int, int]")
        parsed_waypoints.append((wp[0], wp[1]))

    turns = data["turns"]
    _require(isinstance(turns, list) and turns, "turns", "need at least the initial turn")
    parsed_turns = []
    for i, t in enumerate(turns):
        ok = (
            isinstance(t, list)
            and len(t) == 2
            and isinstance(t[0], int)
            and not isinstance(t[0], bool)
            and isinstance(t[1], str)
            and t[1] in HEADINGS
        )
        _require(ok, f"turns[{i}]", "must be [waypoint index, heading]")
        parsed_turns.append((t[0], t[1]))

    raw_landmarks = data["landmarks"]
    _require(isinstance(raw_landmarks, list), "landmarks", "must be a list")
    parsed_landmarks = []
    for i, lm in enumerate(raw_landmarks):
        _require(isinstance(lm, dict), f"landmarks[{i}]", "must be an object")
        extra = set(lm) - {"name", "waypoint", "bearing"}
        _require(not extra, f"landmarks[{i}].{sorted(extra)[0]}" if extra else "", "unknown key")
        _require(isinstance(lm.get("name"), str) and lm["name"], f"landmarks[{i}].name",
                 "must be a nonempty string")
        _require(isinstance(lm.get("waypoint"), int) and not isinstance(lm.get("waypoint"), bool),
                 f"landmarks[{i}].waypoint", "must be an integer")
        _require(isinstance(lm.get("bearing"), str) and lm["bearing"] in HEADINGS,
                 f"landmarks[{i}].bearing", "must be a compass heading")
        parsed_landmarks.append(Landmark(lm["name"], lm["waypoint"], lm["bearing"]))

    _require(isinstance(data["destination"], str) and data["destination"], "destination",
             "must be a nonempty string")
    _require(
        isinstance(data["instructions"], list)
        and all(isinstance(s, str) and s for s in data["instructions"]),
        "instructions", "must be a list of nonempty strings")
    _require(
        isinstance(data["expert_actions"], list)
        and all(isinstance(s, str) and s for s in data["expert_actions"]),
        "expert_actions", "must be a list of nonempty strings")
    _require(
        isinstance(data["max_straight_road_length"], int)
        and not isinstance(data["max_straight_road_length"], bool)
        and data["max_straight_road_length"] >= 1,
        "max_straight_road_length", "must be a positive integer")

    route = Route(
        waypoints=tuple(parsed_waypoints),
        start_heading=data["start_heading"],
        turns=tuple(parsed_turns),
        landmarks=tuple(parsed_landmarks),
        destination=data["destination"],
        instructions=tuple(data["instructions"]),
        expert_actions=tuple(data["expert_actions"]),
        max_straight_road_length=data["max_straight_road_length"],
    )
    validate_route(route)
    return route


def load_route(path: str) -> Route:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"$: not valid json ({exc})") from exc
    return route_from_dict(data)


def save_route(route: Route, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(route_to_dict(route), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def validate_route(route: Route):
    """Geometric and logical consistency; raises InvariantError."""
    n = len(route.waypoints)
    dest = route.destination_index

    indices = [i for i, _ in route.turns]
    if not indices:
        raise InvariantError("the initial turn (waypoint 0) is required")
    if indices != sorted(set(indices)):
        raise InvariantError("turn indices must be strictly ascending")
    if indices[0] != 0:
        raise InvariantError("the initial turn (waypoint 0) is required")
    if indices[-1] >= dest:
        raise InvariantError("no turning point may sit at the destination")

    # every step is a unit move in the heading that governs its segment
    boundaries = indices[1:] + [dest]
    headings = [h for _, h in route.turns]
    seg = 0
    for i in range(n - 1):
        while seg < len(boundaries) - 1 and i >= boundaries[seg]:
            seg += 1
        x0, y0 = route.waypoints[i]
        x1, y1 = route.waypoints[i + 1]
        expected = _VEC[headings[seg]]
        if (x1 - x0, y1 - y0) != expected:
            raise InvariantError(
                f"step {i}->{i + 1} does not follow heading {headings[seg]!r}"
            )

    # straight segments within the cap
    prev = 0
    for boundary in boundaries:
        length = boundary - prev
        if length < 1:
            raise InvariantError("empty straight segment")
        if length > route.max_straight_road_length:
            raise InvariantError(
                f"segment ending at waypoint {boundary} exceeds the straight road cap"
            )
        prev = boundary

    for lm in route.landmarks:
        if not 0 <= lm.waypoint < n:
            raise InvariantError(f"landmark {lm.name!r} anchored outside the route")
    if not any(lm.name == route.destination and lm.waypoint == dest for lm in route.landmarks):
        raise InvariantError("destination landmark must be anchored at the last waypoint")

    interior = len(indices) - 1
    if len(route.instructions) != 2 * interior + 2:
        raise InvariantError(
            f"expected {2 * interior + 2} instructions, found {len(route.instructions)}"
        )
    if len(route.plan()) != len(route.instructions):
        raise InvariantError("instruction list out of step with the movement plan")

    _validate_expert_replay(route)


def _validate_expert_replay(route: Route):
    state = initial_state(route, "absolute")
    for k, action_text in enumerate(route.expert_actions):
        if state.done:
            raise InvariantError("expert trajectory continues past episode end")
        action = parse_action(action_text)
        if action is None:
            raise InvariantError(f"expert_actions[{k}] is not a valid action")
        expected = nav_expert_action(state)
        if action != expected:
            raise InvariantError(
                f"expert_actions[{k}] = {action_text!r} disagrees with the plan "
                f"(expected {expected.render()!r})"
            )
        state = apply_action(state, action)
    if not (state.done and state.success):
        raise InvariantError("expert trajectory does not stop at the destination")


# --- episode state machine ---------------------------------------------------


@dataclass(frozen=True)
class NavState:
    route: Route
    pos: int
    heading: str
    instr_index: int
    space: str  # "absolute" | "relative"
    verify_count: int = 0
    oa_index: int = 1
    detection_enabled: bool = False
    verify_cap: int = VERIFY_CAP
    done: bool = False
    success: bool = False


def initial_state(
    route: Route,
    space: str,
    detection_enabled: bool = False,
    verify_cap: int = VERIFY_CAP,
) -> NavState:
    if space not in ACTION_SPACES:
        raise ValueError(f"space must be one of {ACTION_SPACES}")
    if verify_cap < 1:
        raise ValueError("verify_cap must be >= 1")
    return NavState(
        route=route,
        pos=0,
        heading=route.start_heading,
        instr_index=0,
        space=space,
        detection_enabled=detection_enabled,
        verify_cap=verify_cap,
    )


def nav_observe(state: NavState) -> str:
    """Observation line payload at the current pose.

    The bare "no landmarks" observation carries its trailing semicolon;
    landmark and intersection clauses join with "; " and add nothing at the
    end of the line.
    """
    route = state.route
    clauses = [
        f"{lm.name} is on your {relative_bucket(state.heading, lm.bearing)}"
        for lm in route.landmarks_at(state.pos)
    ]
    if route.is_intersection(state.pos):
        clauses.append(INTERSECTION_CLAUSE)
    if not clauses:
        return NO_LANDMARKS_LINE
    return "; ".join(clauses)


def current_instruction(state: NavState) -> str:
    instructions = state.route.instructions
    return instructions[min(state.instr_index, len(instructions) - 1)]


def nav_expert_action(state: NavState) -> NavAction:
    """Next correct action under the state's action space."""
    plan = state.route.plan()
    if state.instr_index >= len(plan):
        return NavAction("stop")
    kind, value = plan[state.instr_index]
    if kind == "move":
        return NavAction("forward")
    # turn toward the target heading
    if state.space == "absolute":
        return NavAction("turn", value)
    delta = turn_delta(state.heading, value)
    if delta in (45, 90, -45, -90):
        word = next(w for w, d in RELATIVE_WORDS.items() if d == delta)
        return NavAction("turn", word)
    # wider turns decompose into same-direction 90-degree steps
    return NavAction("turn", "right" if delta > 0 else "left")


def apply_action(state: NavState, action: NavAction) -> NavState:
    """Advance the pose/plan with a correct action. Callers grade first."""
    route = state.route
    plan = route.plan()
    if action.kind == "stop":
        return replace(state, done=True, success=True,
                       verify_count=0, oa_index=state.oa_index + 1)
    if action.kind == "forward":
        pos = state.pos + 1
        instr = state.instr_index
        if instr < len(plan) and plan[instr][0] == "move" and pos == plan[instr][1]:
            instr += 1
        return replace(state, pos=pos, instr_index=instr,
                       verify_count=0, oa_index=state.oa_index + 1)
    # turn
    if state.space == "absolute":
        heading = action.arg
        if heading not in HEADINGS:
            raise ValueError(f"not a compass heading: {action.arg!r}")
    else:
        if action.arg not in RELATIVE_WORDS:
            raise ValueError(f"not a relative turn: {action.arg!r}")
        heading = rotate_heading(state.heading, RELATIVE_WORDS[action.arg])
    instr = state.instr_index
    if instr < len(plan) and plan[instr][0] == "turn" and plan[instr][1] == heading:
        instr += 1
    return replace(state, heading=heading, instr_index=instr,
                   verify_count=0, oa_index=state.oa_index + 1)


@dataclass(frozen=True)
class NavStepResult:
    reward: float
    verifier_text: str
    done: bool
    state: NavState
    correct: bool
    step_limit_penalty: float = 0.0
    status: Optional[str] = None


def _echo_matches(echo, observation: str) -> bool:
    if not isinstance(echo, str):
        return False

    def norm(s: str) -> str:
        return (
            s.strip().rstrip(";").lower().replace(" my ", " your ").replace("i observe", "you observe")
        )

    return norm(echo) == norm(observation)


def nav_step(state: NavState, text: str) -> NavStepResult:
    if state.done:
        raise ValueError("episode is already done")
    answer = parse_answer_text(text)
    action = None
    if isinstance(answer.get("action"), str):
        action = parse_action(answer["action"])
    expert = nav_expert_action(state)

    detection_failed = False
    if state.detection_enabled:
        detection_failed = not _echo_matches(answer.get("current observation"), nav_observe(state))

    correct = action == expert and not detection_failed
    if correct:
        new_state = apply_action(state, action)
        verifier = prompts.NAV_CORRECT_LINE
        if not new_state.done:
            obs = nav_observe(new_state)
            verifier += (
                "\n"
                + prompts.render_oa_line(new_state.oa_index, obs)
                + "\n"
                + prompts.render_action_cue(new_state.oa_index)
            )
        return NavStepResult(
            reward=1.0,
            verifier_text=verifier,
            done=new_state.done,
            state=new_state,
            correct=True,
            status="success" if new_state.done else None,
        )

    reward = -1.5 if detection_failed else -1.0
    verify_count = state.verify_count + 1
    exhausted = verify_count >= state.verify_cap
    new_state = replace(state, verify_count=verify_count, done=exhausted)
    return NavStepResult(
        reward=reward,
        verifier_text=prompts.NAV_INCORRECT_LINE,
        done=exhausted,
        state=new_state,
        correct=False,
        step_limit_penalty=-1.0 if exhausted else 0.0,
        status="step_limit" if exhausted else None,
    )


def expert_response_text(state: NavState) -> str:
    answer = {
        "current observation": nav_observe(state),
        "current instruction": current_instruction(state),
        "action": nav_expert_action(state).render(),
    }
    return json.dumps(answer, ensure_ascii=False)


def replay_expert(route: Route, space: str) -> list[tuple[int, str]]:
    """(pos, heading) after each expert action; relative turns may decompose."""
    state = initial_state(route, space)
    trace = []
    guard = 0
    while not state.done:
        action = nav_expert_action(state)
        state = apply_action(state, action)
        trace.append((state.pos, state.heading))
        guard += 1
        if guard > 10 * len(route.expert_actions) + 32:
            raise InvariantError("expert replay does not terminate")
    return trace


# --- env wrapper -------------------------------------------------------------


@dataclass(frozen=True)
class NavEnvConfig:
    action_space: str = "absolute"
    route_config: RouteConfig = RouteConfig()
    routes: tuple[Route, ...] = ()  # fixed pool; overrides the generator if set
    detection_enabled: bool = False
    verify_cap: int = VERIFY_CAP
    variant: str = "l"

    def __post_init__(self):
        if self.action_space not in ACTION_SPACES:
            raise ValueError(f"action_space must be one of {ACTION_SPACES}")
        if self.variant not in ("l", "vl"):
            raise ValueError("variant must be 'l' or 'vl'")
        if self.verify_cap < 1:
            raise ValueError("verify_cap must be >= 1")


class NavigationEnv:
    kind = "nav"

    def __init__(self, config: NavEnvConfig | None = None):
        self.config = config if config is not None else NavEnvConfig()

    def reset(self, seed: int) -> tuple[NavState, str]:
        cfg = self.config
        if cfg.routes:
            route = cfg.routes[seed % len(cfg.routes)]
        else:
            route = generate_route(seed, cfg.route_config)
        state = initial_state(
            route, cfg.action_space, cfg.detection_enabled, cfg.verify_cap
        )
        prompt = prompts.render_nav_prompt(
            route.instructions, cfg.action_space, nav_observe(state)
        )
        return state, prompt

    def step(self, state: NavState, text: str) -> NavStepResult:
        return nav_step(state, text)

    def expert_response(self, state: NavState) -> str:
        return expert_response_text(state)

    def max_episode_turns_for(self, state: NavState) -> int:
        # worst case: every action preceded by cap-1 wrong attempts, plus
        # slack for decomposed relative turns
        return state.verify_cap * (2 * len(state.route.expert_actions) + 8)

    def episode_meta(self, state: NavState, seed: int) -> dict:
        return {
            "env": "nav",
            "variant": self.config.variant,
            "seed": seed,
            "action_space": state.space,
            "destination": state.route.destination,
            "waypoints": len(state.route.waypoints),
            "instructions": len(state.route.instructions),
        }
