from __future__ import annotations

import json
import logging
import threading
from pathlib import Path
from typing import Any, Dict, Optional, Union

import requests
from tenacity import (
    retry,
    retry_if_exception_type,
    stop_after_attempt,
    wait_fixed,
)

from town_sim import config
from town_sim.decision.context import ConversationContext, DecisionContext
from town_sim.exception import BackendConfigurationException, BackendRequestException
from town_sim.parameters import Parameters
from town_sim.world.scenario import RemoteConfig

logger = logging.getLogger(__name__)

SYSTEM_MESSAGE = (
    "You simulate a resident of a small town. Always answer with exactly one JSON "
    "object in a ```json fenced block."
)


class TranscriptWriter:
    """
    Append-only record of every prompt and raw response of a run, one JSON object per
    line. Safe to share between agent executors.

    Parameters
    ----------
    path : str | Path
        File to write. It is truncated when the writer is created.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")
        self._lock = threading.Lock()

    def write(self, record: Dict[str, Any]):
        line = json.dumps(record, sort_keys=True, ensure_ascii=False)
        with self._lock:
            with self.path.open("a", encoding="utf-8") as f:
                f.write(line + "\n")


def _first(*values: Any) -> Any:
    return next((v for v in values if v not in (None, "")), None)


class RemoteLLMBackend:
    """
    Decision backend calling a chat-completion endpoint over HTTP.

    The wire contract is minimal: a POST with `model`, `temperature` and `messages`,
    answered by `choices[0].message.content`. At most `max_in_flight` requests are
    outstanding at any time; each has a timeout and one network-level retry.

    Parameters
    ----------
    endpoint : str
        URL of the chat-completion endpoint.
    model : str
        Model identifier sent with every request.
    api_key : str, optional
        Bearer token, by default None.
    temperature : float, optional
        Sampling temperature.
    timeout : float, optional
        Per-request timeout in seconds.
    max_in_flight : int, optional
        Concurrent request limit.
    transcript : TranscriptWriter, optional
        Where prompts and raw responses are recorded.
    """

    name = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: Optional[str] = None,
        temperature: float = Parameters.REMOTE_TEMPERATURE,
        timeout: float = Parameters.REMOTE_TIMEOUT,
        max_in_flight: int = Parameters.REMOTE_MAX_IN_FLIGHT,
        transcript: Optional[TranscriptWriter] = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.timeout = timeout
        self.max_in_flight = max_in_flight
        self.transcript = transcript
        self._slots = threading.BoundedSemaphore(max_in_flight)

    @classmethod
    def from_config(
        cls,
        remote: RemoteConfig = RemoteConfig(),
        transcript: Optional[TranscriptWriter] = None,
    ) -> RemoteLLMBackend:
        """
        Build the backend from the scenario's `sim.remote` section, filling gaps from
        the environment and then from the defaults.

        Raises
        ------
        BackendConfigurationException
            If no endpoint or no model is configured.
        """
        endpoint = _first(remote.endpoint, config.TOWN_LLM_ENDPOINT)
        if endpoint is None:
            raise BackendConfigurationException("TOWN_LLM_ENDPOINT")
        model = _first(remote.model, config.TOWN_LLM_MODEL)
        if model is None:
            raise BackendConfigurationException("TOWN_LLM_MODEL")

        return cls(
            endpoint=endpoint,
            model=model,
            api_key=config.TOWN_LLM_API_KEY,
            temperature=float(
                _first(
                    remote.temperature,
                    config.TOWN_LLM_TEMPERATURE,
                    Parameters.REMOTE_TEMPERATURE,
                )
            ),
            timeout=float(
                _first(remote.timeout, config.TOWN_LLM_TIMEOUT, Parameters.REMOTE_TIMEOUT)
            ),
            max_in_flight=int(
                _first(
                    remote.max_in_flight,
                    config.TOWN_LLM_MAX_IN_FLIGHT,
                    Parameters.REMOTE_MAX_IN_FLIGHT,
                )
            ),
            transcript=transcript,
        )

    def decide(self, context: DecisionContext, prompt: str) -> str:
        return self._complete(prompt, context.agent, context.day, context.tick)

    def converse(self, context: ConversationContext, prompt: str) -> str:
        return self._complete(prompt, context.initiator, context.day, context.tick)

    def health_check(self) -> bool:
        """
        Whether the endpoint answers at all. Any HTTP response, even an error status,
        counts as healthy; only connection failures do not.
        """
        try:
            requests.request(method="GET", url=self.endpoint, timeout=5)
            return True
        except requests.exceptions.RequestException as _:
            return False

    def _complete(self, prompt: str, agent: str, day: int, tick: int) -> str:
        messages = [
            {"role": "system", "content": SYSTEM_MESSAGE},
            {"role": "user", "content": prompt},
        ]
        data = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": messages,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        record = {"agent": agent, "day": day, "tick": tick, "prompt": prompt}
        try:
            with self._slots:
                response = self._send_request(
                    url=self.endpoint, data=data, headers=headers, timeout=self.timeout
                )
            content = self._content(response.json())
        except (requests.exceptions.RequestException, ValueError) as e:
            record["error"] = str(e)
            self._record(record)
            raise BackendRequestException(f"Request to {self.endpoint} failed: {e}") from e

        record["response"] = content
        self._record(record)
        return content

    def _record(self, record: Dict[str, Any]):
        if self.transcript is not None:
            self.transcript.write(record)

    @staticmethod
    def _content(body: Dict[str, Any]) -> str:
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise ValueError(f"Unexpected response body: {e}")
        if not isinstance(content, str):
            raise ValueError("Response content is not text")
        return content

    @staticmethod
    @retry(
        retry=retry_if_exception_type(
            (requests.exceptions.ConnectionError, requests.exceptions.Timeout)
        ),
        stop=stop_after_attempt(2),
        wait=wait_fixed(1),
        reraise=True,
    )
    def _send_request(
        url: str,
        method: str = "POST",
        data: Optional[Dict[str, Any]] = None,
        headers: Optional[Dict[str, Any]] = None,
        timeout: float | None = None,
    ) -> requests.Response:
        """
        Send an HTTP request to the specified endpoint. Connection errors and timeouts
        are retried once.

        Parameters
        ----------
        url : str
            The URL to send the request to
        method : str, optional
            The HTTP method to use
        data : Dict[str, Any], optional
            The data to send in the request body
        headers : Dict[str, Any], optional
            The headers to include in the request
        timeout : float, optional
            The timeout for the request

        Returns
        -------
        requests.Response
            The response from the server

        Raises
        ------
        requests.exceptions.RequestException
            If the request fails
        """
        if headers is None:
            headers = {"Content-Type": "application/json"}

        try:
            response = requests.request(
                method=method.upper(),
                url=url,
                json=data,
                headers=headers,
                timeout=timeout,
            )
            response.raise_for_status()
            return response

        except requests.exceptions.RequestException as e:
            logger.warning("Request failed: %s", e)
            raise
