"""
This file contains the environment configuration for the simulator.
"""

import os

TOWN_LLM_ENDPOINT = os.getenv("TOWN_LLM_ENDPOINT")
TOWN_LLM_API_KEY = os.getenv("TOWN_LLM_API_KEY")
TOWN_LLM_MODEL = os.getenv("TOWN_LLM_MODEL")
TOWN_LLM_TEMPERATURE = os.getenv("TOWN_LLM_TEMPERATURE")
TOWN_LLM_TIMEOUT = os.getenv("TOWN_LLM_TIMEOUT")
TOWN_LLM_MAX_IN_FLIGHT = os.getenv("TOWN_LLM_MAX_IN_FLIGHT")

SIMULATION_DATABASE_URL = os.getenv("SIMULATION_DATABASE_URL")

TOWN_SIM_LOG_LEVEL = os.getenv("TOWN_SIM_LOG_LEVEL", "WARNING")
