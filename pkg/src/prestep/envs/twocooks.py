"""TwoCooks: a two-agent cooking line with an embedded scripted partner.

The human controls agent 0; agent 1 is driven by a scripted policy that
is a pure function of the state, so it lives inside `step` and the whole
joint transition stays deterministic and speculation-safe.

Layout characters: `#` counter, `.` floor, `O` onion pile, `P` pot,
`S` plate stack, `D` delivery window, `1`/`2` agent start cells (floor).
Agents stand on floor and interact with the counter cell they face.

One cycle: put 3 onions in the pot (it cooks instantly when full), fetch
a plate, plate the soup, carry it to the delivery window. Each delivery
pays `reward_per_delivery` to both agents; the episode ends after
`deliveries_to_done` deliveries or at `step_limit` steps.

Both agents move simultaneously from the pre-step state: moves into
counters or off-grid keep the agent in place (facing still updates),
colliding targets and position swaps block both movers. Interactions
resolve after movement, human first.

Tile ids: 0 floor, 1 counter, 2 onion pile, 3 pot, 4 plate stack,
5 delivery, 6 you, 7 partner. Carried items, pot fill, and the delivery
tally travel in the overlay text.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache

from ..codec import Reader, Writer
from ..errors import ConfigError
from ..rng import Rng
from .base import Cell, Environment, EnvState, Observation, StateDescription, StepResult

FLOOR, COUNTER, ONION_PILE, POT, PLATE_STACK, DELIVERY, AGENT_SELF, AGENT_PARTNER = range(8)

UP, DOWN, LEFT, RIGHT, STAY, INTERACT = 0, 1, 2, 3, 4, 5
_DELTAS = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}
_MOVES = (UP, DOWN, LEFT, RIGHT)

HOLD_NONE, HOLD_ONION, HOLD_PLATE, HOLD_SOUP = 0, 1, 2, 3
_HOLD_NAMES = ("nothing", "an onion", "a plate", "soup")

POT_CAPACITY = 3

PARTNER_POLICY_ID = "scripted-cook-v1"

DEFAULT_LAYOUT = (
    "##P##",
    "#...#",
    "O...S",
    "#.1.#",
    "#2..#",
    "##D##",
)


@dataclass(frozen=True, slots=True)
class TwoCooksParams:
    layout: tuple[str, ...] = DEFAULT_LAYOUT
    partner_policy: str = PARTNER_POLICY_ID
    step_limit: int = 200
    deliveries_to_done: int = 1
    reward_per_delivery: float = 1.0


@dataclass(frozen=True, slots=True)
class TwoCooksWorld:
    positions: tuple[Cell, Cell]
    dirs: tuple[int, int]
    holdings: tuple[int, int]
    pot_onions: int
    pot_cooked: bool
    deliveries: int


@dataclass(frozen=True)
class _Layout:
    width: int
    height: int
    floors: frozenset[Cell]
    onion_piles: tuple[Cell, ...]
    pot: Cell
    plate_stack: Cell
    delivery: Cell
    starts: tuple[Cell, Cell]

    def cell_type(self, cell: Cell) -> int:
        if cell in self.floors:
            return FLOOR
        if cell in self.onion_piles:
            return ONION_PILE
        if cell == self.pot:
            return POT
        if cell == self.plate_stack:
            return PLATE_STACK
        if cell == self.delivery:
            return DELIVERY
        return COUNTER


@lru_cache(maxsize=64)
def _parse_layout(layout: tuple[str, ...]) -> _Layout:
    if not layout:
        raise ConfigError("layout", "layout is empty")
    width = len(layout[0])
    if any(len(row) != width for row in layout):
        raise ConfigError("layout", "layout rows have unequal widths")
    floors: set[Cell] = set()
    piles: list[Cell] = []
    pots: list[Cell] = []
    stacks: list[Cell] = []
    deliveries: list[Cell] = []
    starts: dict[str, Cell] = {}
    for r, row in enumerate(layout):
        for c, ch in enumerate(row):
            cell = (r, c)
            if ch in ".12":
                floors.add(cell)
                if ch in starts:
                    raise ConfigError("layout", f"duplicate start marker {ch!r}")
                if ch != ".":
                    starts[ch] = cell
            elif ch == "O":
                piles.append(cell)
            elif ch == "P":
                pots.append(cell)
            elif ch == "S":
                stacks.append(cell)
            elif ch == "D":
                deliveries.append(cell)
            elif ch != "#":
                raise ConfigError("layout", f"unknown layout character {ch!r} at {cell}")
    for name, cells in (("P", pots), ("S", stacks), ("D", deliveries)):
        if len(cells) != 1:
            raise ConfigError("layout", f"layout needs exactly one {name!r}, found {len(cells)}")
    if not piles:
        raise ConfigError("layout", "layout needs at least one onion pile 'O'")
    if "1" not in starts or "2" not in starts:
        raise ConfigError("layout", "layout needs one '1' and one '2' start cell")
    parsed = _Layout(
        width=width,
        height=len(layout),
        floors=frozenset(floors),
        onion_piles=tuple(sorted(piles)),
        pot=pots[0],
        plate_stack=stacks[0],
        delivery=deliveries[0],
        starts=(starts["1"], starts["2"]),
    )
    for name, cell in (("P", parsed.pot), ("S", parsed.plate_stack), ("D", parsed.delivery)):
        if not _adjacent_floors(parsed, cell):
            raise ConfigError("layout", f"{name!r} at {cell} has no adjacent floor cell")
    for pile in parsed.onion_piles:
        if not _adjacent_floors(parsed, pile):
            raise ConfigError("layout", f"'O' at {pile} has no adjacent floor cell")
    return parsed


def _adjacent_floors(layout: _Layout, cell: Cell) -> list[Cell]:
    out = []
    for action in _MOVES:
        dr, dc = _DELTAS[action]
        nbr = (cell[0] + dr, cell[1] + dc)
        if nbr in layout.floors:
            out.append(nbr)
    return out


def _direction_to(src: Cell, dst: Cell) -> int:
    for action, (dr, dc) in _DELTAS.items():
        if (src[0] + dr, src[1] + dc) == dst:
            return action
    raise ValueError(f"{dst} is not adjacent to {src}")


def _first_moves(layout: _Layout, origin: Cell, blocked: Cell) -> dict[Cell, tuple[int, int]]:
    """BFS over floor cells avoiding `blocked`; maps each reachable cell
    to (distance, first move action). Neighbor order fixes tie-breaks."""
    table: dict[Cell, tuple[int, int]] = {origin: (0, STAY)}
    queue = deque([origin])
    while queue:
        cell = queue.popleft()
        dist, first = table[cell]
        for action in _MOVES:
            dr, dc = _DELTAS[action]
            nbr = (cell[0] + dr, cell[1] + dc)
            if nbr not in layout.floors or nbr == blocked or nbr in table:
                continue
            table[nbr] = (dist + 1, action if cell == origin else first)
            queue.append(nbr)
    return table


class TwoCooks(Environment):
    kind = "twocooks"
    n_actions = 6
    action_names = ("up", "down", "left", "right", "stay", "interact")
    multi_agent = True

    def validate_params(self, params: TwoCooksParams) -> None:
        _parse_layout(params.layout)
        if params.partner_policy != PARTNER_POLICY_ID:
            raise ConfigError("partner_policy", f"unknown policy {params.partner_policy!r}")
        if params.step_limit < 1:
            raise ConfigError("step_limit", "must be at least 1")
        if params.deliveries_to_done < 1:
            raise ConfigError("deliveries_to_done", "must be at least 1")

    def params_from_payload(self, payload: dict) -> TwoCooksParams:
        known = {"layout", "partner_policy", "step_limit", "deliveries_to_done", "reward_per_delivery"}
        for key in payload:
            if key not in known:
                raise ConfigError(f"params.{key}", "unknown field")
        try:
            return TwoCooksParams(
                layout=tuple(payload.get("layout", DEFAULT_LAYOUT)),
                partner_policy=str(payload.get("partner_policy", PARTNER_POLICY_ID)),
                step_limit=int(payload.get("step_limit", 200)),
                deliveries_to_done=int(payload.get("deliveries_to_done", 1)),
                reward_per_delivery=float(payload.get("reward_per_delivery", 1.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("params", f"malformed twocooks params: {exc}") from exc

    def params_to_payload(self, params: TwoCooksParams) -> dict:
        return {
            "layout": list(params.layout),
            "partner_policy": params.partner_policy,
            "step_limit": params.step_limit,
            "deliveries_to_done": params.deliveries_to_done,
            "reward_per_delivery": params.reward_per_delivery,
        }

    def reset(self, params: TwoCooksParams, rng: Rng) -> tuple[EnvState, Observation]:
        self.validate_params(params)
        layout = _parse_layout(params.layout)
        world = TwoCooksWorld(
            positions=layout.starts,
            dirs=(UP, UP),
            holdings=(HOLD_NONE, HOLD_NONE),
            pot_onions=0,
            pot_cooked=False,
            deliveries=0,
        )
        state = EnvState(world=world, rng=rng, episode_step=0, done=False)
        return state, self.observe(state, params)

    def step(self, state: EnvState, action: int, params: TwoCooksParams, rng: Rng) -> StepResult:
        self.check_step_preconditions(state, action)
        layout = _parse_layout(params.layout)
        world: TwoCooksWorld = state.world
        actions = (action, self.partner_action(state, params))

        dirs = list(world.dirs)
        desired = list(world.positions)
        for i, act in enumerate(actions):
            if act in _MOVES:
                dirs[i] = act
                dr, dc = _DELTAS[act]
                target = (world.positions[i][0] + dr, world.positions[i][1] + dc)
                if target in layout.floors:
                    desired[i] = target
        if desired[0] == desired[1]:
            desired = list(world.positions)
        elif desired[0] == world.positions[1] and desired[1] == world.positions[0]:
            desired = list(world.positions)
        positions = (desired[0], desired[1])

        holdings = list(world.holdings)
        pot_onions = world.pot_onions
        pot_cooked = world.pot_cooked
        delivered = 0
        for i in (0, 1):  # human's interaction resolves first
            if actions[i] != INTERACT:
                continue
            dr, dc = _DELTAS[dirs[i]]
            faced = (positions[i][0] + dr, positions[i][1] + dc)
            kind = layout.cell_type(faced)
            if kind == ONION_PILE and holdings[i] == HOLD_NONE:
                holdings[i] = HOLD_ONION
            elif kind == POT and holdings[i] == HOLD_ONION and pot_onions < POT_CAPACITY:
                holdings[i] = HOLD_NONE
                pot_onions += 1
                if pot_onions == POT_CAPACITY:
                    pot_cooked = True
            elif kind == POT and holdings[i] == HOLD_PLATE and pot_cooked:
                holdings[i] = HOLD_SOUP
                pot_onions = 0
                pot_cooked = False
            elif kind == PLATE_STACK and holdings[i] == HOLD_NONE:
                holdings[i] = HOLD_PLATE
            elif kind == DELIVERY and holdings[i] == HOLD_SOUP:
                holdings[i] = HOLD_NONE
                delivered += 1

        deliveries = world.deliveries + delivered
        next_step = state.episode_step + 1
        done = deliveries >= params.deliveries_to_done or next_step >= params.step_limit
        next_world = TwoCooksWorld(
            positions=positions,
            dirs=(dirs[0], dirs[1]),
            holdings=(holdings[0], holdings[1]),
            pot_onions=pot_onions,
            pot_cooked=pot_cooked,
            deliveries=deliveries,
        )
        next_state = EnvState(world=next_world, rng=rng, episode_step=next_step, done=done)
        return StepResult(
            state=next_state,
            observation=self.observe(next_state, params),
            reward=delivered * params.reward_per_delivery,
            done=done,
        )

    def partner_action(self, state: EnvState, params: TwoCooksParams) -> int:
        layout = _parse_layout(params.layout)
        world: TwoCooksWorld = state.world
        me = world.positions[1]
        holding = world.holdings[1]

        if holding == HOLD_SOUP:
            target = layout.delivery
        elif holding == HOLD_PLATE:
            if not world.pot_cooked:
                return STAY  # wait for the pot to fill
            target = layout.pot
        elif holding == HOLD_ONION:
            if world.pot_onions >= POT_CAPACITY:
                return STAY
            target = layout.pot
        else:
            if world.pot_cooked:
                target = layout.plate_stack
            else:
                target = self._nearest_pile(layout, me, world.positions[0])
                if target is None:
                    return STAY

        if abs(me[0] - target[0]) + abs(me[1] - target[1]) == 1:
            facing = _direction_to(me, target)
            return INTERACT if world.dirs[1] == facing else facing
        moves = _first_moves(layout, me, blocked=world.positions[0])
        best: tuple[int, Cell, int] | None = None
        for adj in _adjacent_floors(layout, target):
            if adj not in moves:
                continue
            dist, first = moves[adj]
            if best is None or (dist, adj) < (best[0], best[1]):
                best = (dist, adj, first)
        if best is None or best[2] == STAY:
            return STAY
        return best[2]

    def _nearest_pile(self, layout: _Layout, me: Cell, other: Cell) -> Cell | None:
        moves = _first_moves(layout, me, blocked=other)
        best: tuple[int, Cell] | None = None
        for pile in layout.onion_piles:
            dists = [moves[adj][0] for adj in _adjacent_floors(layout, pile) if adj in moves]
            if abs(me[0] - pile[0]) + abs(me[1] - pile[1]) == 1:
                dists.append(0)
            if not dists:
                continue
            cand = (min(dists), pile)
            if best is None or cand < best:
                best = cand
        return best[1] if best else None

    def observe(self, state: EnvState, params: TwoCooksParams) -> Observation:
        layout = _parse_layout(params.layout)
        world: TwoCooksWorld = state.world
        grid = []
        for r in range(layout.height):
            row = []
            for c in range(layout.width):
                cell = (r, c)
                if cell == world.positions[0]:
                    row.append(AGENT_SELF)
                elif cell == world.positions[1]:
                    row.append(AGENT_PARTNER)
                else:
                    row.append(layout.cell_type(cell))
            grid.append(tuple(row))
        overlay = (
            f"you carry {_HOLD_NAMES[world.holdings[0]]}; "
            f"partner carries {_HOLD_NAMES[world.holdings[1]]}; "
            f"pot {world.pot_onions}/{POT_CAPACITY}{' (ready)' if world.pot_cooked else ''}; "
            f"delivered {world.deliveries}/{params.deliveries_to_done}"
        )
        legal = []
        for act in range(self.n_actions):
            if act in _MOVES:
                dr, dc = _DELTAS[act]
                target = (world.positions[0][0] + dr, world.positions[0][1] + dc)
                legal.append(target in layout.floors and target != world.positions[1])
            else:
                legal.append(True)
        return Observation(grid=tuple(grid), overlay=overlay, legal=tuple(legal))

    def encode_world(self, writer: Writer, world: TwoCooksWorld) -> None:
        for pos in world.positions:
            writer.u16(pos[0])
            writer.u16(pos[1])
        for d in world.dirs:
            writer.u8(d)
        for h in world.holdings:
            writer.u8(h)
        writer.u8(world.pot_onions)
        writer.boolean(world.pot_cooked)
        writer.u16(world.deliveries)

    def decode_world(self, reader: Reader) -> TwoCooksWorld:
        positions = ((reader.u16(), reader.u16()), (reader.u16(), reader.u16()))
        dirs = (reader.u8(), reader.u8())
        holdings = (reader.u8(), reader.u8())
        return TwoCooksWorld(
            positions=positions,
            dirs=dirs,
            holdings=holdings,
            pot_onions=reader.u8(),
            pot_cooked=reader.boolean(),
            deliveries=reader.u16(),
        )

    def describe(self, state: EnvState, params: TwoCooksParams) -> StateDescription:
        layout = _parse_layout(params.layout)
        world: TwoCooksWorld = state.world
        dr, dc = layout.delivery
        objects: list[tuple[str, Cell]] = [
            (f"you (carrying {_HOLD_NAMES[world.holdings[0]]})", world.positions[0]),
            (f"partner (carrying {_HOLD_NAMES[world.holdings[1]]})", world.positions[1]),
            (f"pot ({world.pot_onions}/{POT_CAPACITY}{', ready' if world.pot_cooked else ''})", layout.pot),
            ("plate stack", layout.plate_stack),
            ("delivery window", layout.delivery),
        ]
        objects += [("onion pile", pile) for pile in layout.onion_piles]
        return StateDescription(
            goal_text=(
                f"cook soups from {POT_CAPACITY} onions and deliver "
                f"{params.deliveries_to_done} at row {dr}, column {dc}"
            ),
            objects=tuple(objects),
            rules_text=(
                "Face a counter and interact: take an onion from a pile, drop onions "
                f"into the pot ({POT_CAPACITY} make a soup), take a plate from the stack, "
                "plate a ready soup at the pot, deliver plated soup at the window. "
                f"Each delivery pays {params.reward_per_delivery:g}; the episode ends after "
                f"{params.deliveries_to_done} deliveries or {params.step_limit} steps."
            ),
        )
