from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from town_sim.decision.context import (
    CommitmentView,
    ConversationContext,
    build_context,
    location_options,
)
from town_sim.decision.oracle import SHUFFLE, hour_text, spawn_rng
from town_sim.decision.retry import (
    BackendHealth,
    DecisionBackend,
    converse_with_fallback,
    decide_with_retry,
)
from town_sim.decision.social import choose_partner, skip_reason
from town_sim.decision.validation import ActionKind, ActionPlan
from town_sim.economy.needs import (
    Activity,
    FallbackAction,
    energy_fallback,
    home_meal,
    tick_decay,
)
from town_sim.economy.pricing import format_cents
from town_sim.economy.purchase import IncomeTrigger, accrue_income, execute_purchase
from town_sim.engine.agent import AgentState
from town_sim.engine.clock import SimClock
from town_sim.engine.event_log import EventKind, EventLog
from town_sim.engine.guards import GuardRegistry
from town_sim.engine.tracker import LocationTracker
from town_sim.exception import (
    BackendUnavailableException,
    InvariantBreachException,
    PurchaseException,
)
from town_sim.memory.commitments import (
    Commitment,
    CommitmentLedger,
    CommitmentStatus,
    Conversation,
    extract_commitments,
    settle_commitments,
)
from town_sim.memory.stream import MemoryKind, MemoryStream, RetrievalQuery
from town_sim.parameters import Parameters
from town_sim.world.loader import Scenario
from town_sim.world.scenario import IncomeKind, RunMode

logger = logging.getLogger(__name__)


@dataclass
class SimulationResult:
    """
    Everything a run produced.

    Attributes
    ----------
    event_log : EventLog
        The complete event log, or the part written before an abort.
    agents : Dict[str, AgentState]
        Final agent states by name.
    positions : Dict[str, str]
        Final positions by agent name.
    ledger : CommitmentLedger
        Every commitment made during the run.
    completed : bool
        False when the run was aborted.
    """

    event_log: EventLog
    agents: Dict[str, AgentState]
    positions: Dict[str, str]
    ledger: CommitmentLedger
    completed: bool = True

    @property
    def memories(self) -> Dict[str, MemoryStream]:
        return {name: agent.memory for name, agent in sorted(self.agents.items())}

    def memory_lines(self) -> List[str]:
        lines = []
        for _, memory in self.memories.items():
            lines.extend(memory.to_lines())
        return lines

    def final_states(self) -> List[Dict[str, Any]]:
        return [
            agent.to_record(self.positions[name])
            for name, agent in sorted(self.agents.items())
        ]


class Simulator:
    """
    The tick-based scheduler of the town.

    Every awake tick runs three phases in order: agents decide and act, co-present
    agents may talk, then meals, commitments and positions are checked. Each phase
    finishes for every agent before the next one starts. At the end of the day
    everyone sleeps at home, then shop owners are paid the day's receipts. A
    collapsed agent logs nothing until it wakes.

    In deterministic mode agents act one at a time in a seeded shuffled order. In
    parallel mode every agent has its own worker thread and the guards keep shared
    state consistent.

    Parameters
    ----------
    scenario : Scenario
        The validated scenario.
    backend : DecisionBackend
        Where decisions and conversations come from.
    mode : RunMode, optional
        Execution mode, by default the scenario's.
    audit : bool, optional
        Check that state is only changed under its guard, by default False.
    """

    def __init__(
        self,
        scenario: Scenario,
        backend: DecisionBackend,
        mode: Optional[RunMode] = None,
        audit: bool = False,
    ):
        self.town_map = scenario.town_map
        self.sim = scenario.sim
        self.backend = backend
        self.mode = mode or self.sim.mode
        self.guards = GuardRegistry(audit=audit)
        self.event_log = EventLog()
        self.tracker = LocationTracker(self.town_map, self.guards)
        self.ledger = CommitmentLedger()
        self.health = BackendHealth(self.sim.remote.unavailable_after)
        self.clock = SimClock(ticks_per_day=self.sim.ticks_per_day)

        personas = sorted(scenario.personas, key=lambda p: p.name)
        self.known_agents = tuple(p.name for p in personas)
        self.agents: Dict[str, AgentState] = {}
        for index, persona in enumerate(personas):
            memory = MemoryStream(
                owner=persona.name,
                relationships=dict(persona.relationships),
                config=self.sim.memory,
                ticks_per_day=self.sim.ticks_per_day,
            )
            self.agents[persona.name] = AgentState(
                persona=persona,
                index=index,
                memory=memory,
                guards=self.guards,
                grocery_threshold=self.sim.economy.grocery_threshold,
            )
            self.tracker.place(persona.name, persona.residence)

        # Day receipts of owned shops, each changed only under the shop's location guard
        self._receipts: Dict[str, int] = {
            shop.location_name: 0
            for shop in self.town_map.shops.values()
            if shop.owner is not None
        }
        self._pool: Optional[ThreadPoolExecutor] = None

    def run(self) -> SimulationResult:
        """
        Run every day of the scenario.

        Returns
        -------
        SimulationResult
            The event log and final state.

        Raises
        ------
        BackendUnavailableException
            If the decision backend became permanently unavailable. The partial
            result is attached to the exception.
        InvariantBreachException
            If positions and occupant sets disagree or a validated purchase fails.
        """
        logger.info(
            "Simulation starts: %d days, %d agents, %s mode",
            self.sim.days,
            len(self.agents),
            self.mode.value,
        )
        if self.mode == RunMode.PARALLEL and self.agents:
            self._pool = ThreadPoolExecutor(
                max_workers=len(self.agents), thread_name_prefix="agent"
            )
        try:
            last_tick = self.sim.ticks_per_day - 1
            end = SimClock(self.sim.days + 1, 0, self.sim.ticks_per_day).absolute
            while self.clock.absolute < end:
                day, tick = self.clock.day, self.clock.tick
                if tick == 0:
                    self._start_day(day)
                if self.sim.schedule.is_awake(tick):
                    self._run_tick(day, tick)
                if tick == last_tick:
                    self._end_day(day)
                self.clock.advance()
        except BackendUnavailableException as e:
            logger.error("Simulation aborted: %s", e)
            e.partial_result = self._result(completed=False)
            raise
        finally:
            if self._pool is not None:
                self._pool.shutdown(wait=True)
                self._pool = None

        logger.info("Simulation ends with %d events", len(self.event_log))
        return self._result()

    def _result(self, completed: bool = True) -> SimulationResult:
        return SimulationResult(
            event_log=self.event_log,
            agents=self.agents,
            positions=self.tracker.positions(),
            ledger=self.ledger,
            completed=completed,
        )

    def _log(
        self,
        day: int,
        tick: int,
        agent: Optional[str],
        kind: EventKind,
        log_message: str,
        payload: Optional[Dict[str, Any]] = None,
    ):
        """
        Append an event to the event log, then write it to the console log.

        Parameters
        ----------
        day, tick : int
            When it happened.
        agent : str, optional
            The agent concerned.
        kind : EventKind
            Kind of the event.
        log_message : str
            Human readable message.
        payload : Dict[str, Any], optional
            Details of the event.
        """
        self.event_log.append(day, tick, agent, kind, payload)
        agent_msg = f" - agent={agent}" if agent is not None else ""
        logger.debug("day=%d tick=%d%s - %s", day, tick, agent_msg, log_message)

    def _map(self, function, items: List[Any]):
        """
        Apply `function` to every item, concurrently in parallel mode. Returns once
        all calls have finished, re-raising the first failure.
        """
        if self._pool is None:
            for item in items:
                function(item)
            return
        futures = [self._pool.submit(function, item) for item in items]
        errors = []
        for future in futures:
            try:
                future.result()
            except Exception as e:
                errors.append(e)
        if errors:
            # Aborts take precedence over other failures of the same phase
            unavailable = [e for e in errors if isinstance(e, BackendUnavailableException)]
            raise (unavailable or errors)[0]

    # Day boundaries

    def _start_day(self, day: int):
        wake = self.sim.schedule.wake_tick
        for name, agent in self.agents.items():
            with self.guards.hold(agent.guard):
                agent.start_day()
                needs, amount = accrue_income(
                    agent.persona, agent.needs, IncomeTrigger.PAYDAY, day
                )
                if amount:
                    agent.update(needs=needs)
                    self._log(
                        day,
                        wake,
                        name,
                        EventKind.INCOME,
                        f"Received monthly pay of {format_cents(amount)}",
                        {"source": "payday", "amount": format_cents(amount)},
                    )

    def _end_day(self, day: int):
        sleep = self.sim.schedule.sleep_tick
        for name, agent in self.agents.items():
            with self.guards.hold(agent.guard):
                if not agent.collapsed:
                    self._reflect(agent, day, sleep)

        self.nightly_reset(day)

        # after the reset, so a collapsed owner is paid as well
        for name, agent in self.agents.items():
            if agent.persona.income_kind != IncomeKind.BUSINESS_OWNER:
                continue
            owned = sorted(
                shop.location_name
                for shop in self.town_map.shops.values()
                if shop.owner == name
            )
            with self.guards.hold(
                agent.guard, *(self.guards.location(shop) for shop in owned)
            ):
                total = sum(self._receipts[shop] for shop in owned)
                for shop in owned:
                    self._receipts[shop] = 0
                needs, amount = accrue_income(
                    agent.persona, agent.needs, IncomeTrigger.DAY_END, day, total
                )
                if amount:
                    agent.update(needs=needs)
                    self._log(
                        day,
                        sleep,
                        name,
                        EventKind.INCOME,
                        f"Received shop receipts of {format_cents(amount)}",
                        {
                            "source": "receipts",
                            "shops": owned,
                            "amount": format_cents(amount),
                        },
                    )

    def _reflect(self, agent: AgentState, day: int, tick: int):
        purchases = [
            e
            for e in agent.memory.entries
            if e.day == day and e.kind == MemoryKind.PURCHASE
        ]
        spent = sum((e.payload or {}).get("price_cents", 0) for e in purchases)
        content = (
            f"Day {day}: ate {len(agent.meals_done)} meals, made {len(purchases)} "
            f"purchases for ${format_cents(spent)}, ended with energy "
            f"{agent.needs.energy} and ${format_cents(agent.needs.money)}."
        )
        agent.memory.record(day, tick, MemoryKind.REFLECTION, content)
        self._log(
            day,
            tick,
            agent.name,
            EventKind.REFLECTION,
            content,
            {"content": content},
        )

    def nightly_reset(self, day: int):
        """
        Everyone sleeps at home and wakes with full energy.
        """
        sleep = self.sim.schedule.sleep_tick
        for name, agent in self.agents.items():
            with self.guards.hold(agent.guard):
                residence = agent.persona.residence
                position = self.tracker.position(name)
                if position != residence:
                    self.tracker.move(name, residence, force=True)
                energy_before = agent.needs.energy
                agent.update(
                    needs=agent.needs.with_energy(Parameters.MAX_ENERGY),
                    collapsed=False,
                    emergency=False,
                    last_action=None,
                )
                self._log(
                    day,
                    sleep,
                    name,
                    EventKind.SLEEP,
                    f"Sleeps at {residence}",
                    {
                        "location": residence,
                        "from": position,
                        "energy_before": energy_before,
                        "energy_after": agent.needs.energy,
                    },
                )

    # Ticks

    def _run_tick(self, day: int, tick: int):
        self._act_phase(day, tick)
        self._social_phase(day, tick)
        self._bookkeeping(day, tick)

    def _act_phase(self, day: int, tick: int):
        live = [a for _, a in sorted(self.agents.items()) if not a.collapsed]
        if self.mode == RunMode.DETERMINISTIC:
            rng = spawn_rng(self.sim.seed, len(self.agents), day, tick, SHUFFLE)
            live = [live[i] for i in rng.permutation(len(live))]
        self._map(lambda agent: self._act(agent, day, tick), live)

    def _act(self, agent: AgentState, day: int, tick: int):
        name = agent.name
        with self.guards.hold(agent.guard):
            context = build_context(
                town_map=self.town_map,
                sim=self.sim,
                persona=agent.persona,
                agent_index=agent.index,
                needs=agent.needs,
                position=self.tracker.position(name),
                day=day,
                tick=tick,
                memory=agent.memory,
                commitments=self.ledger.pending_for(name),
                known_agents=self.known_agents,
                emergency=agent.emergency,
                meals_done=agent.meals_done,
                shopping_needed=agent.shopping_needed,
                must_eat_out_or_shop=agent.must_eat_out_or_shop,
            )
            decision = decide_with_retry(
                self.backend,
                context,
                self.sim.max_retries,
                self.sim.seed,
                self.sim.oracle,
                self.health,
            )
            for attempt, failure in enumerate(decision.failures, start=1):
                self._log(
                    day,
                    tick,
                    name,
                    EventKind.VALIDATION_FAILED,
                    f"Attempt {attempt} rejected: {failure.describe()}",
                    {
                        "attempt": attempt,
                        "reason": failure.reason.value,
                        "field": failure.field,
                        "detail": failure.detail,
                    },
                )
            plan = decision.plan
            self._log(
                day,
                tick,
                name,
                EventKind.DECISION,
                f"Decided to {plan.action.value} at {plan.target}",
                {
                    "prompt_kind": context.prompt_kind.value,
                    "action": plan.action.value,
                    "target": plan.target,
                    "item": plan.item,
                    "attempts": decision.attempts,
                    "fell_back": decision.fell_back,
                    "energy": agent.needs.energy,
                    "emergency": agent.emergency,
                },
            )
            activity = self._execute(agent, plan, context.meal_due, day, tick)
            agent.update(last_action=plan.action.value)

            needs = tick_decay(agent.needs, activity, self.sim.economy)
            agent.update(needs=needs)
            fallback = energy_fallback(needs, self.sim.economy)
            if fallback == FallbackAction.COLLAPSE:
                self._collapse(agent, day, tick)
            elif fallback == FallbackAction.EMERGENCY:
                if not agent.emergency:
                    self._log(
                        day,
                        tick,
                        name,
                        EventKind.EMERGENCY_REPLAN,
                        f"Energy is down to {needs.energy}, next decision must be food",
                        {"energy": needs.energy},
                    )
                agent.update(emergency=True)
            else:
                agent.update(emergency=False)

    def _execute(
        self,
        agent: AgentState,
        plan: ActionPlan,
        meal_due: Optional[str],
        day: int,
        tick: int,
    ) -> Activity:
        """
        Carry out a validated plan. Eating, working and shopping happen at the target,
        so the agent travels there first. Returns the activity for energy decay.
        """
        persona = agent.persona
        action = plan.action

        if action == ActionKind.SKIP:
            if meal_due is not None:
                agent.finish_meal(meal_due)
                self._log(
                    day,
                    tick,
                    agent.name,
                    EventKind.MEAL_SKIPPED,
                    f"Skips {meal_due}",
                    {"meal": meal_due, "reason": "decided to skip"},
                )
            return Activity.idle()

        if action == ActionKind.CONVERSE:
            partner_location = self.tracker.locate(plan.target)
            if partner_location is not None:
                self.execute_travel(agent, partner_location, day, tick)
            return Activity.idle()

        if not self.execute_travel(agent, plan.target, day, tick):
            return Activity.idle()

        if action == ActionKind.WORK:
            self._log(
                day,
                tick,
                agent.name,
                EventKind.WORK,
                f"Works at {plan.target}",
                {"location": plan.target},
            )
            if persona.is_work_tick(day, tick):
                needs, amount = accrue_income(
                    persona, agent.needs, IncomeTrigger.WORK_TICK, day
                )
                if amount:
                    agent.update(needs=needs)
                    self._log(
                        day,
                        tick,
                        agent.name,
                        EventKind.INCOME,
                        f"Earned {format_cents(amount)}",
                        {"source": "wage", "amount": format_cents(amount)},
                    )
            return Activity.work()

        if action == ActionKind.EAT and plan.target == persona.residence:
            self._home_meal(agent, meal_due, day, tick)
        elif action in (ActionKind.EAT, ActionKind.SHOP_GROCERIES):
            self._purchase(agent, plan, meal_due, day, tick)
        return Activity.idle()

    def _home_meal(self, agent: AgentState, meal_due: Optional[str], day: int, tick: int):
        economy = self.sim.economy
        outcome = home_meal(agent.needs, economy)
        if not outcome.eaten:
            agent.update(must_eat_out_or_shop=True, shopping_needed=True)
            self._log(
                day,
                tick,
                agent.name,
                EventKind.HOME_MEAL_REFUSED,
                "Not enough groceries to cook",
                {"grocery": agent.needs.grocery, "required": economy.meal_grocery_cost},
            )
            return

        agent.update(needs=outcome.needs, shopping_needed=outcome.shopping_needed)
        agent.finish_meal(meal_due)
        label = meal_due or "meal"
        self._log(
            day,
            tick,
            agent.name,
            EventKind.MEAL,
            f"Cooked {label} at home",
            {
                "meal": meal_due,
                "location": agent.persona.residence,
                "source": "home",
                "energy_after": outcome.needs.energy,
                "grocery_after": outcome.needs.grocery,
            },
        )
        agent.memory.record(
            day,
            tick,
            MemoryKind.EVENT,
            f"Cooked {label} at home.",
            payload={"location": agent.persona.residence},
        )

    def _purchase(
        self,
        agent: AgentState,
        plan: ActionPlan,
        meal_due: Optional[str],
        day: int,
        tick: int,
    ):
        shop = self.town_map.shops[plan.target]
        try:
            needs, event = execute_purchase(
                agent.name, agent.needs, shop, plan.item, day, tick
            )
        except PurchaseException as e:
            raise InvariantBreachException(
                f"Validated purchase of {agent.name} failed: {e.reason}: {e}",
                self.event_log.last(Parameters.RECENT_EVENTS_ON_BREACH),
            )

        economy = self.sim.economy
        agent.update(
            needs=needs,
            shopping_needed=needs.grocery < economy.grocery_threshold,
            must_eat_out_or_shop=(
                agent.must_eat_out_or_shop and needs.grocery < economy.meal_grocery_cost
            ),
        )
        if shop.location_name in self._receipts:
            with self.guards.hold(self.guards.location(shop.location_name)):
                self._receipts[shop.location_name] += event.final_price

        payload = event.to_payload()
        self._log(
            day,
            tick,
            agent.name,
            EventKind.PURCHASE,
            f"Bought {event.item} at {event.shop} for {format_cents(event.final_price)}",
            payload,
        )
        agent.memory.record(
            day,
            tick,
            MemoryKind.PURCHASE,
            f"Bought {event.item} at {event.shop} for ${format_cents(event.final_price)}"
            + (f" ({int(round(event.discount_rate * 100))}% off)" if event.discount_rate else ""),
            payload={
                "shop": event.shop,
                "item": event.item,
                "price": format_cents(event.final_price),
                "price_cents": event.final_price,
            },
        )

        item = shop.menu_item(event.item)
        if plan.action == ActionKind.EAT and item.energy_restore >= economy.meal_min_energy:
            agent.finish_meal(meal_due)
            self._log(
                day,
                tick,
                agent.name,
                EventKind.MEAL,
                f"Had {event.item} at {event.shop}",
                {
                    "meal": meal_due,
                    "location": event.shop,
                    "source": "shop",
                    "item": event.item,
                    "energy_after": needs.energy,
                },
            )

    def execute_travel(
        self, agent: AgentState, destination: str, day: int, tick: int
    ) -> bool:
        """
        Move an agent and charge the travel energy. The caller holds the agent's
        guard.

        Travelling to the current location is free and logs nothing. Collapsed agents
        cannot travel.

        Returns
        -------
        bool
            Whether the agent is at the destination afterwards.
        """
        if agent.collapsed:
            logger.debug("Travel of %s refused: collapsed", agent.name)
            return False

        destination = self.town_map.resolve(destination)
        origin = self.tracker.position(agent.name)
        if origin == destination:
            return True

        if not self.tracker.move(agent.name, destination):
            self._log(
                day,
                tick,
                agent.name,
                EventKind.TRAVEL_REFUSED,
                f"{destination} is full",
                {"from": origin, "to": destination, "reason": "capacity"},
            )
            return False

        distance = self.town_map.distance(origin, destination)
        cost = distance * self.sim.economy.travel_cost
        agent.update(needs=agent.needs.with_energy(agent.needs.energy - cost))
        self._log(
            day,
            tick,
            agent.name,
            EventKind.TRAVEL,
            f"Travelled from {origin} to {destination}",
            {
                "from": origin,
                "to": destination,
                "distance": distance,
                "energy_cost": cost,
                "energy_after": agent.needs.energy,
            },
        )
        agent.memory.record(
            day,
            tick,
            MemoryKind.EVENT,
            f"Went from {origin} to {destination}.",
            payload={"location": destination},
        )
        return True

    def _collapse(self, agent: AgentState, day: int, tick: int):
        """
        Take an agent home. The meals still ahead of it that day are skipped here,
        as it logs nothing else until it wakes.
        """
        for meal, _ in sorted(
            self.sim.schedule.meal_windows.items(), key=lambda kv: kv[1]
        ):
            if meal in agent.meals_done:
                continue
            agent.finish_meal(meal)
            self._log(
                day,
                tick,
                agent.name,
                EventKind.MEAL_SKIPPED,
                f"Misses {meal} after collapsing",
                {"meal": meal, "reason": "collapsed"},
            )

        residence = agent.persona.residence
        position = self.tracker.position(agent.name)
        self.tracker.move(agent.name, residence, force=True)
        agent.update(collapsed=True, emergency=False)
        self._log(
            day,
            tick,
            agent.name,
            EventKind.COLLAPSE_TELEPORT,
            f"Collapsed at {position}, taken home to {residence}",
            {"from": position, "to": residence, "energy": agent.needs.energy},
        )
        agent.memory.record(
            day,
            tick,
            MemoryKind.REFLECTION,
            f"I ran out of energy at {position} and had to be taken home.",
            payload={"location": position},
        )

    # Social phase

    def _social_phase(self, day: int, tick: int):
        self._map(
            lambda location: self._social_at(location, day, tick),
            self.tracker.occupied(),
        )

    def _social_at(self, location: str, day: int, tick: int):
        present = sorted(self.tracker.co_present(location))
        if len(present) < 2:
            return
        talked = set()
        for name in present:
            if name in talked:
                continue
            others = [o for o in present if o != name and o not in talked]
            self.conversation_check(name, others, location, day, tick, talked)

    def _available(self, agent: AgentState) -> Optional[str]:
        if agent.collapsed:
            return "collapsed"
        return skip_reason(agent.last_action, agent.needs.energy, self.sim.oracle)

    def conversation_check(
        self,
        name: str,
        others: List[str],
        location: str,
        day: int,
        tick: int,
        talked: Optional[set] = None,
    ) -> Optional[Conversation]:
        """
        Let an agent start a conversation with the closest available co-present
        agent.

        Agents who are working, low on energy or on their way somewhere do not talk;
        the refusal is logged. An agent takes part in at most one conversation per
        tick.

        Returns
        -------
        Conversation | None
            The conversation, or None if none took place.
        """
        talked = talked if talked is not None else set()
        agent = self.agents[name]
        if agent.collapsed or not others:
            return None
        reason = self._available(agent)
        if reason is not None:
            logger.debug("Social check skipped for %s - %s", name, reason)
            self._log(
                day,
                tick,
                name,
                EventKind.SOCIAL_CHECK_SKIPPED,
                f"Social check skipped - {reason}",
                {"reason": reason, "location": location},
            )
            return None

        candidates = [
            o for o in others if o not in talked and self._available(self.agents[o]) is None
        ]
        partner_name = choose_partner(agent.persona, candidates)
        if partner_name is None:
            return None
        talked.update({name, partner_name})
        return self._converse(agent, self.agents[partner_name], location, day, tick)

    def _converse(
        self,
        agent: AgentState,
        partner: AgentState,
        location: str,
        day: int,
        tick: int,
    ) -> Conversation:
        sim = self.sim
        with self.guards.hold(agent.guard, partner.guard):
            context = ConversationContext(
                initiator=agent.name,
                initiator_index=agent.index,
                partner=partner.name,
                partner_index=partner.index,
                initiator_persona=agent.persona,
                partner_persona=partner.persona,
                location=location,
                day=day,
                tick=tick,
                ticks_per_day=sim.ticks_per_day,
                proximity=agent.persona.proximity(partner.name),
                partner_proximity=partner.persona.proximity(agent.name),
                locations=location_options(
                    self.town_map, agent.persona.residence, day, tick, sim.economy
                ),
                known_agents=self.known_agents,
                memories=tuple(
                    agent.memory.retrieve(
                        RetrievalQuery(
                            day=day,
                            tick=tick,
                            participants=frozenset({partner.name}),
                            max_n=sim.memory.max_memories,
                        )
                    )
                ),
                pending_between=tuple(
                    CommitmentView.of(c)
                    for c in self.ledger.pending_between(agent.name, partner.name)
                ),
            )
            conversation, fell_back = converse_with_fallback(
                self.backend, context, sim.seed, sim.oracle, self.health
            )
            payload = conversation.to_payload()
            payload["fell_back"] = fell_back
            self._log(
                day,
                tick,
                agent.name,
                EventKind.CONVERSATION,
                f"Talked with {partner.name} at {location}",
                payload,
            )
            transcript = " ".join(f"{s}: {t}" for s, t in conversation.dialogue)
            for me, other in ((agent, partner), (partner, agent)):
                me.memory.record(
                    day,
                    tick,
                    MemoryKind.CONVERSATION,
                    f"Talked with {other.name} at {location}. {transcript}",
                    source_agent=agent.name,
                    participants=(agent.name, partner.name),
                )

        extraction = extract_commitments(
            conversation,
            (agent.name, partner.name),
            self.town_map,
            self.known_agents,
            sim.ticks_per_day,
        )
        for rejected in extraction.rejected:
            self._log(
                day,
                tick,
                agent.name,
                EventKind.VALIDATION_FAILED,
                f"Commitment rejected: {rejected.reason} ({rejected.field}: {rejected.value})",
                {
                    "source": "conversation",
                    "reason": rejected.reason,
                    "field": rejected.field,
                    "detail": rejected.value,
                },
            )
        for proposer, respondent in extraction.declined:
            proposer_state = self.agents[proposer]
            with self.guards.hold(proposer_state.guard):
                proposer_state.memory.record(
                    day,
                    tick,
                    MemoryKind.EVENT,
                    f"{respondent} declined my invitation.",
                    participants=(respondent,),
                )
        for commitment in extraction.commitments:
            self._create_commitment(commitment, agent.name, day, tick)
        return conversation

    def _create_commitment(
        self, commitment: Commitment, initiator: str, day: int, tick: int
    ):
        parties = [self.agents[p] for p in sorted(commitment.parties)]
        with self.guards.hold(*(p.guard for p in parties)):
            self.ledger.add(commitment)
            payload = commitment.to_payload()
            self._log(
                day,
                tick,
                initiator,
                EventKind.COMMITMENT_CREATED,
                f"Commitment {commitment.id} created",
                payload,
            )
            if CommitmentStatus.RESCHEDULED.value in commitment.history:
                self._log(
                    day,
                    tick,
                    initiator,
                    EventKind.COMMITMENT_RESCHEDULED,
                    f"Commitment {commitment.id} moved to day {commitment.day}",
                    payload,
                )
            for party in parties:
                others = sorted(commitment.parties - {party.name})
                party.memory.record(
                    day,
                    tick,
                    MemoryKind.EVENT,
                    (
                        f"Agreed to {commitment.action} with {', '.join(others)} at "
                        f"{commitment.location} on day {commitment.day} at "
                        f"{hour_text(commitment.tick)}."
                    ),
                    participants=others,
                    payload={"commitment": payload},
                )

    # Bookkeeping

    def _bookkeeping(self, day: int, tick: int):
        for meal, (start, end) in sorted(
            self.sim.schedule.meal_windows.items(), key=lambda kv: kv[1]
        ):
            if tick != end - 1:
                continue
            for name, agent in self.agents.items():
                if meal in agent.meals_done:
                    continue
                with self.guards.hold(agent.guard):
                    agent.finish_meal(meal)
                    self._log(
                        day,
                        tick,
                        name,
                        EventKind.MEAL_SKIPPED,
                        f"Missed {meal}",
                        {"meal": meal, "reason": "window ended"},
                    )

        unavailable = frozenset(n for n, a in self.agents.items() if a.collapsed)
        changed = settle_commitments(
            self.ledger,
            self.tracker.co_present,
            day,
            tick,
            self.sim.ticks_per_day,
            unavailable,
        )
        for commitment in changed:
            self._record_settlement(commitment, day, tick)

        error = self.tracker.consistency_error(list(self.agents))
        if error is not None:
            raise InvariantBreachException(
                f"Position consistency broken at day={day} tick={tick}: {error}",
                self.event_log.last(Parameters.RECENT_EVENTS_ON_BREACH),
            )

    def _record_settlement(self, commitment: Commitment, day: int, tick: int):
        fulfilled = commitment.status == CommitmentStatus.FULFILLED
        kind = (
            EventKind.COMMITMENT_FULFILLED if fulfilled else EventKind.COMMITMENT_BROKEN
        )
        parties = [self.agents[p] for p in sorted(commitment.parties)]
        with self.guards.hold(*(p.guard for p in parties)):
            # a collapsed party is never the agent of an event
            actor = next((p.name for p in parties if not p.collapsed), None)
            self._log(
                day,
                tick,
                actor,
                kind,
                f"Commitment {commitment.id} {commitment.status.value}",
                commitment.to_payload(),
            )
            for party in parties:
                others = ", ".join(sorted(commitment.parties - {party.name}))
                if fulfilled:
                    party.memory.record(
                        day,
                        tick,
                        MemoryKind.EVENT,
                        f"Met {others} for {commitment.action} at {commitment.location}.",
                        participants=commitment.parties - {party.name},
                        payload={"commitment": commitment.to_payload()},
                    )
                else:
                    party.memory.record(
                        day,
                        tick,
                        MemoryKind.REFLECTION,
                        (
                            f"The {commitment.action} with {others} at "
                            f"{commitment.location} did not happen."
                        ),
                        participants=commitment.parties - {party.name},
                        payload={"commitment": commitment.to_payload()},
                    )


def run(
    scenario: Scenario,
    backend: DecisionBackend,
    mode: Optional[RunMode] = None,
    audit: bool = False,
) -> SimulationResult:
    """
    Run a scenario to the end.

    Parameters
    ----------
    scenario : Scenario
        The validated scenario.
    backend : DecisionBackend
        The decision backend.
    mode : RunMode, optional
        Execution mode, by default the scenario's.
    audit : bool, optional
        Audit the guard discipline, by default False.

    Returns
    -------
    SimulationResult
        The event log and final state.
    """
    return Simulator(scenario, backend, mode=mode, audit=audit).run()
