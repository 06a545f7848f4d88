import json
import logging
from typing import Iterable, Optional

import pandas
from sqlalchemy import Column, Float, Integer, String, Text, create_engine, select
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import declarative_base, sessionmaker

from town_sim.config import SIMULATION_DATABASE_URL
from town_sim.engine.event_log import Event

logger = logging.getLogger(__name__)

Base = declarative_base()


class SimulationRun(Base):
    """
    Table to store simulation run information.

    Attributes
    ----------
    id : int
        The ID of the simulation run. It is incremented automatically.
    name : str
        The name of the scenario.
    scenario_path : str
        Path of the scenario file.
    seed : int
        Seed of the run.
    mode : str
        "deterministic" or "parallel".
    backend : str
        "oracle" or "remote".
    start_timestamp : float
        The UNIX timestamp of the start of the run.
    end_timestamp : float
        The UNIX timestamp of the end of the run.
    status : str
        "running", "completed", "aborted" or "failed".
    """

    __tablename__ = "simulation_runs"

    id = Column(Integer, primary_key=True)
    name = Column(String)
    scenario_path = Column(String)
    seed = Column(String)
    mode = Column(String)
    backend = Column(String)
    start_timestamp = Column(Float)
    end_timestamp = Column(Float, nullable=True)
    status = Column(String)


class EventRecord(Base):
    """
    Table to store the event log of a run.

    Attributes
    ----------
    id : int
        The ID of the record. It is incremented automatically.
    simulation_run_id : int
        The run the event belongs to.
    day, tick, seq : int
        Time and position of the event in the run.
    agent : str
        The agent concerned, if any.
    kind : str
        Kind of the event.
    payload : str
        The payload as JSON.
    """

    __tablename__ = "events"

    id = Column(Integer, primary_key=True)
    simulation_run_id = Column(Integer)
    day = Column(Integer)
    tick = Column(Integer)
    seq = Column(Integer)
    agent = Column(String, nullable=True)
    kind = Column(String)
    payload = Column(Text)


class RunRegistry:
    """
    Class related to interacting with the run registry database.

    Database errors are logged and rolled back; the methods then return a falsy
    value instead of raising.

    Parameters
    ----------
    database_url : str, optional
        SQLAlchemy URL, by default SIMULATION_DATABASE_URL.
    """

    def __init__(self, database_url: Optional[str] = None):
        database_url = database_url or SIMULATION_DATABASE_URL
        if not database_url:
            raise ValueError("No database URL configured")
        self.engine = create_engine(database_url)
        Session = sessionmaker(bind=self.engine)
        self.session = Session()
        Base.metadata.create_all(self.engine)

    def start_run(
        self,
        name: str,
        scenario_path: str,
        seed: int,
        mode: str,
        backend: str,
        start_timestamp: float,
    ) -> Optional[int]:
        """
        Register a new run.

        Returns
        -------
        int | None
            The ID of the run, or None if it could not be stored.
        """
        try:
            run = SimulationRun(
                name=name,
                scenario_path=scenario_path,
                seed=str(seed),
                mode=mode,
                backend=backend,
                start_timestamp=start_timestamp,
                status="running",
            )
            self.session.add(run)
            self.session.commit()
            return run.id
        except SQLAlchemyError as e:
            logger.error("Error registering simulation run: %s", e)
            self.session.rollback()
            return None

    def finish_run(self, simulation_run_id: int, end_timestamp: float, status: str) -> bool:
        """
        Set the end timestamp and final status of a run.

        Returns
        -------
        bool
            True if the run is updated successfully, False otherwise.
        """
        try:
            run = self.session.get(SimulationRun, simulation_run_id)
            if run is None:
                logger.warning("No simulation run found with ID %s", simulation_run_id)
                return False
            run.end_timestamp = end_timestamp
            run.status = status
            self.session.commit()
            return True
        except SQLAlchemyError as e:
            logger.error("Error finishing simulation run: %s", e)
            self.session.rollback()
            return False

    def store_events(self, simulation_run_id: int, events: Iterable[Event]) -> bool:
        """
        Store the event log of a run.

        Returns
        -------
        bool
            True if the events are stored successfully, False otherwise.
        """
        try:
            self.session.add_all(
                EventRecord(
                    simulation_run_id=simulation_run_id,
                    day=event.day,
                    tick=event.tick,
                    seq=event.seq,
                    agent=event.agent,
                    kind=event.kind,
                    payload=json.dumps(event.payload, sort_keys=True),
                )
                for event in events
            )
            self.session.commit()
            return True
        except SQLAlchemyError as e:
            logger.error("Error storing events: %s", e)
            self.session.rollback()
            return False

    def get_runs(self) -> pandas.DataFrame:
        """
        Retrieves every registered run.

        Returns
        -------
        pandas.DataFrame
            One row per run, ordered by ID.
        """
        try:
            query = select(SimulationRun.__table__).order_by(SimulationRun.id)
            return pandas.read_sql(query, self.engine)
        except SQLAlchemyError as e:
            logger.error("Error retrieving simulation runs: %s", e)
            return pandas.DataFrame()

    def get_events(self, simulation_run_id: int) -> pandas.DataFrame:
        """
        Retrieves the events of a run in log order.
        """
        try:
            query = (
                select(EventRecord.__table__)
                .where(EventRecord.simulation_run_id == simulation_run_id)
                .order_by(EventRecord.seq)
            )
            return pandas.read_sql(query, self.engine)
        except SQLAlchemyError as e:
            logger.error("Error retrieving events: %s", e)
            return pandas.DataFrame()

    def close_connection(self):
        """
        Close the database connection.
        """
        self.session.close()
        self.engine.dispose()
