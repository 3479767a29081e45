"""Navigation: geometry, route generation, serialization, and stepping."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruleshift.nav_env import (
    ACTION_SPACES,
    HEADINGS,
    HOLDOUT_LANDMARK_POOL,
    INTERSECTION_CLAUSE,
    InvariantError,
    NO_LANDMARKS_LINE,
    NavAction,
    NavEnvConfig,
    NavigationEnv,
    RELATIVE_WORDS,
    RouteConfig,
    SchemaError,
    VERIFY_CAP,
    apply_action,
    current_instruction,
    demo_route,
    generate_route,
    heading_degrees,
    initial_state,
    nav_expert_action,
    nav_observe,
    nav_step,
    parse_action,
    relative_bucket,
    replay_expert,
    rotate_heading,
    route_from_dict,
    route_to_dict,
    turn_delta,
    validate_route,
)

seeds = st.integers(min_value=0, max_value=10_000)
route_configs = st.builds(
    RouteConfig,
    turning_points=st.integers(min_value=0, max_value=4),
    min_straight=st.integers(min_value=1, max_value=2),
    max_straight_road_length=st.integers(min_value=2, max_value=5),
    landmark_probability=st.floats(min_value=0.0, max_value=1.0),
)


# --- compass geometry ---------------------------------------------------------


def test_heading_degrees_ordering():
    assert heading_degrees("north") == 0
    assert heading_degrees("east") == 90
    assert heading_degrees("southwest") == 225
    with pytest.raises(ValueError):
        heading_degrees("up")


@given(st.sampled_from(HEADINGS), st.sampled_from((-90, -45, 45, 90, 135, 180)))
def test_rotate_then_delta_round_trip(heading, delta):
    rotated = rotate_heading(heading, delta)
    expected = delta if delta <= 180 else delta - 360
    assert turn_delta(heading, rotated) == expected


@given(st.sampled_from(HEADINGS), st.sampled_from(HEADINGS))
def test_turn_delta_range(a, b):
    d = turn_delta(a, b)
    assert -180 < d <= 180
    assert d % 45 == 0
    assert rotate_heading(a, d) == b


def test_relative_bucket_hand_cases():
    assert relative_bucket("north", "north") == "front"
    assert relative_bucket("north", "east") == "right"
    assert relative_bucket("north", "west") == "left"
    assert relative_bucket("north", "south") == "behind"
    assert relative_bucket("north", "northeast") == "right front"
    assert relative_bucket("north", "southeast") == "right behind"
    assert relative_bucket("north", "southwest") == "left behind"
    assert relative_bucket("north", "northwest") == "left front"
    # egocentric: rotate both and the descriptor is unchanged
    assert relative_bucket("east", "southeast") == "right front"


def test_parse_action():
    assert parse_action("forward()") == NavAction("forward")
    assert parse_action(" stop() ") == NavAction("stop")
    assert parse_action("turn_direction(north)") == NavAction("turn", "north")
    assert parse_action("turn_direction( slightly left )") == NavAction("turn", "slightly left")
    assert parse_action("go north") is None
    assert parse_action("turn_direction(north") is None


def test_nav_action_render_round_trip():
    for action in [NavAction("forward"), NavAction("stop"), NavAction("turn", "southwest")]:
        assert parse_action(action.render()) == action


# --- route generation ----------------------------------------------------------


@settings(max_examples=80, deadline=None)
@given(seeds, route_configs)
def test_generated_routes_validate(seed, config):
    route = generate_route(seed, config)
    validate_route(route)  # raises on any structural defect
    assert len(route.instructions) == 2 * config.turning_points + 2
    assert route.expert_actions[-1] == "stop()"
    assert route.max_straight_road_length == config.max_straight_road_length


@given(seeds)
def test_route_generation_is_deterministic(seed):
    assert generate_route(seed) == generate_route(seed)


def test_holdout_pool_changes_surface_not_structure():
    base = generate_route(3)
    held = generate_route(3, RouteConfig(landmark_pool=HOLDOUT_LANDMARK_POOL))
    assert base.waypoints == held.waypoints
    assert base.turns == held.turns
    names = {lm.name for lm in held.landmarks} | {held.destination}
    assert names <= set(HOLDOUT_LANDMARK_POOL)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_expert_replay_reaches_destination_in_both_spaces(seed):
    route = generate_route(seed)
    for space in ACTION_SPACES:
        trace = replay_expert(route, space)
        final_pos, _ = trace[-1]
        assert final_pos == route.destination_index


def test_demo_route_is_valid_and_stable():
    route = demo_route()
    validate_route(route)
    assert route.destination == "Café de la Presse"
    assert [lm.name for lm in route.landmarks][:1] == ["Hotel 32One"]
    # instructions are the frozen literals, not re-rendered text
    assert route.instructions[0] == "First, turn left to face east."


# --- serialization ---------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(seeds, route_configs)
def test_route_dict_round_trip(seed, config):
    route = generate_route(seed, config)
    assert route_from_dict(route_to_dict(route)) == route


def test_route_dict_round_trips_through_json():
    route = demo_route()
    assert route_from_dict(json.loads(json.dumps(route_to_dict(route)))) == route


def test_route_from_dict_rejects_defects():
    good = route_to_dict(demo_route())

    for mutate in [
        lambda d: d.pop("waypoints"),
        lambda d: d.update(version=2),
        lambda d: d.update(start_heading="up"),
        lambda d: d.update(extra_field=1),
        lambda d: d["waypoints"].append([1, 2, 3]),
        lambda d: d.update(turns=[]),
        lambda d: d["landmarks"][0].pop("bearing"),
    ]:
        data = json.loads(json.dumps(good))
        mutate(data)
        with pytest.raises(SchemaError):
            route_from_dict(data)

    # well-formed but physically wrong data fails the replay invariant instead
    data = json.loads(json.dumps(good))
    data["expert_actions"] = []
    with pytest.raises(InvariantError):
        route_from_dict(data)


def test_validate_route_catches_teleport():
    route = demo_route()
    broken = route.__class__(
        **{**route_to_dict_kwargs(route), "waypoints": route.waypoints[:-1] + ((99, 99),)}
    )
    with pytest.raises(ValueError):
        validate_route(broken)


def route_to_dict_kwargs(route):
    from dataclasses import fields

    return {f.name: getattr(route, f.name) for f in fields(route)}


# --- observations ----------------------------------------------------------------


def test_initial_observation_of_demo_route():
    state = initial_state(demo_route(), "absolute")
    assert nav_observe(state) == NO_LANDMARKS_LINE


def test_observation_mentions_intersection_and_landmark():
    route = generate_route(0)
    state = initial_state(route, "absolute")
    seen = []
    while not state.done:
        seen.append(nav_observe(state))
        state = apply_action(state, nav_expert_action(state))
    assert any(INTERSECTION_CLAUSE in obs for obs in seen)
    assert any(" is on your " in obs for obs in seen)
    # single-clause landmark lines carry no trailing semicolon
    for obs in seen:
        if obs != NO_LANDMARKS_LINE:
            assert not obs.endswith(";")


def test_current_instruction_advances_with_plan():
    route = demo_route()
    state = initial_state(route, "absolute")
    assert current_instruction(state) == route.instructions[0]
    state = apply_action(state, nav_expert_action(state))
    assert current_instruction(state) == route.instructions[1]


# --- stepping ---------------------------------------------------------------------


def expert_json(state) -> str:
    return json.dumps(
        {
            "current observation": nav_observe(state),
            "current instruction": current_instruction(state),
            "action": nav_expert_action(state).render(),
        }
    )


def wrong_json(state) -> str:
    expert = nav_expert_action(state)
    action = "stop()" if expert.kind != "stop" else "forward()"
    return json.dumps({"current observation": "", "current instruction": "", "action": action})


def test_correct_step_rewards_one_and_appends_observation():
    state = initial_state(demo_route(), "absolute")
    result = nav_step(state, expert_json(state))
    assert result.correct
    assert result.reward == 1.0
    assert not result.done
    assert result.verifier_text.startswith("Correct solution.")
    assert "\nO_2: " in result.verifier_text
    assert result.verifier_text.endswith("A_2:")


def test_wrong_step_then_retry_then_cap():
    state = initial_state(demo_route(), "absolute")
    first = nav_step(state, wrong_json(state))
    assert first.reward == -1.0
    assert not first.done
    assert first.verifier_text == "Incorrect action."
    assert first.step_limit_penalty == 0.0
    second = nav_step(first.state, wrong_json(first.state))
    assert second.done  # VERIFY_CAP == 2
    assert second.status == "step_limit"
    assert second.step_limit_penalty == -1.0
    with pytest.raises(ValueError):
        nav_step(second.state, wrong_json(second.state))


def test_verify_cap_is_per_coordinate():
    state = initial_state(demo_route(), "absolute")
    result = nav_step(state, wrong_json(state))
    assert result.state.verify_count == 1
    result = nav_step(result.state, expert_json(result.state))
    assert result.correct
    # a correct action resets the counter for the next coordinate
    assert result.state.verify_count == 0


def test_custom_verify_cap():
    state = initial_state(demo_route(), "absolute", verify_cap=1)
    result = nav_step(state, wrong_json(state))
    assert result.done
    with pytest.raises(ValueError):
        initial_state(demo_route(), "absolute", verify_cap=0)


def test_full_expert_episode_succeeds_in_both_spaces():
    for space in ACTION_SPACES:
        state = initial_state(demo_route(), space)
        rewards = []
        while not state.done:
            result = nav_step(state, expert_json(state))
            assert result.correct
            rewards.append(result.reward)
            state = result.state
        assert state.success
        assert result.status == "success"
        assert set(rewards) == {1.0}


def test_relative_words_reject_absolute_heading():
    state = initial_state(demo_route(), "relative")
    expert = nav_expert_action(state)
    assert expert.kind == "turn"
    assert expert.arg in RELATIVE_WORDS
    # the absolute rendering of the same turn is wrong in relative space
    absolute_turn = json.dumps(
        {"current observation": "", "current instruction": "", "action": "turn_direction(east)"}
    )
    result = nav_step(state, absolute_turn)
    assert not result.correct


def test_detection_failure_costs_extra():
    state = initial_state(demo_route(), "absolute", detection_enabled=True)
    text = json.dumps(
        {
            "current observation": "A parade of elephants;",
            "current instruction": current_instruction(state),
            "action": nav_expert_action(state).render(),
        }
    )
    result = nav_step(state, text)
    assert not result.correct
    assert result.reward == -1.5


def test_detection_echo_is_lenient_about_punctuation_and_person():
    state = initial_state(demo_route(), "absolute", detection_enabled=True)
    # case and the trailing semicolon are normalized away
    echoed = nav_observe(state).upper().rstrip(";")
    text = json.dumps(
        {
            "current observation": echoed,
            "current instruction": current_instruction(state),
            "action": nav_expert_action(state).render(),
        }
    )
    assert nav_step(state, text).correct


def test_prose_is_graded_wrong_not_crash():
    state = initial_state(demo_route(), "absolute")
    result = nav_step(state, "I will just walk forward.")
    assert not result.correct
    assert result.reward == -1.0


# --- env wrapper ------------------------------------------------------------------


def test_env_reset_renders_prompt_with_instructions():
    env = NavigationEnv(NavEnvConfig(action_space="absolute"))
    state, prompt = env.reset(seed=12)
    for line in state.route.instructions:
        assert line in prompt
    assert "O_1: " in prompt


def test_env_fixed_route_pool_cycles():
    routes = (generate_route(1), generate_route(2))
    env = NavigationEnv(NavEnvConfig(routes=routes))
    state, _ = env.reset(seed=0)
    assert state.route == routes[0]
    state, _ = env.reset(seed=3)
    assert state.route == routes[1]


def test_env_config_validation():
    with pytest.raises(ValueError):
        NavEnvConfig(action_space="cartesian")
    with pytest.raises(ValueError):
        NavEnvConfig(verify_cap=0)
    with pytest.raises(ValueError):
        NavEnvConfig(variant="x")


def test_env_verify_cap_reaches_state():
    env = NavigationEnv(NavEnvConfig(verify_cap=3))
    state, _ = env.reset(seed=0)
    assert state.verify_cap == 3
    assert env.max_episode_turns_for(state) == 3 * (2 * len(state.route.expert_actions) + 8)


def test_episode_meta_fields():
    env = NavigationEnv(NavEnvConfig(action_space="relative"))
    state, _ = env.reset(seed=6)
    meta = env.episode_meta(state, seed=6)
    assert meta["env"] == "nav"
    assert meta["action_space"] == "relative"
    assert meta["seed"] == 6
    assert meta["waypoints"] == len(state.route.waypoints)
    assert meta["instructions"] == len(state.route.instructions)
    assert meta["destination"] == state.route.destination


def test_default_verify_cap_matches_constant():
    assert VERIFY_CAP == 2
    state = initial_state(demo_route(), "absolute")
    assert state.verify_cap == 2
