"""Interactive teaching session server.

Runs the live simulation and exposes it over one WebSocket endpoint
(``/session``) speaking newline-free JSON frames: telemetry out, force
input and commands in.  The simulation advances on its own thread; the
socket side and the simulation exchange data only through bounded queues
and atomic snapshot swaps, so a slow client can never stall the control
loop (telemetry is dropped oldest-first instead).

The first connected client is the therapist and may send inputs; later
connections receive read-only telemetry.  When the therapist disconnects
the simulation pauses with its state retained and resumes on reconnect.

Static panel assets are served from the same port for plain HTTP requests.
"""

from __future__ import annotations

import asyncio
import dataclasses
import json
import math
import mimetypes
import queue
import threading
import time
from http import HTTPStatus
from pathlib import Path

import numpy as np
from websockets.asyncio.server import serve as ws_serve
from websockets.datastructures import Headers
from websockets.exceptions import ConnectionClosed
from websockets.http11 import Response

from .config import FullConfig, build_world, parse_config
from .experiments import NAMED_SCRIPTS, SkillScript, skill_trajectory
from .geometry import Pose, Wrench
from .sim import DivergenceError, human_arm_wrench
from .telemetry import frame_to_json

PROTOCOL_VERSION = "teleteach.session.v1"
TELEMETRY_EVERY_TICKS = 16  # ~60 Hz from the 1 kHz loop
SETTABLE_PARAMS = {
    "autonomy.lambda_f",
    "autonomy.lambda_m",
    "autonomy.lambda_err",
    "autonomy.rho",
    "autonomy.epsilon",
}
# pointer plane: indices into the 6-D wrench/pose space
PLANE_AXES = (0, 2)  # X and Z translation
MOMENT_AXIS = 1  # twist gesture maps to a Y moment


class TeachSession:
    """Owns the world and the simulation thread."""

    def __init__(self, cfg: FullConfig, realtime: bool = True):
        self.cfg = cfg
        self.world = build_world(cfg)
        self.world.demo_source = self._demo_wrench
        self.realtime = realtime
        self._pointer: tuple[float, float] | None = None
        self._direct = np.zeros(6)
        self._script: SkillScript | None = None
        self._commands: queue.Queue = queue.Queue(maxsize=256)
        self._step_budget = 0
        self._primary_connected = False
        self._stop = threading.Event()
        self._loop: asyncio.AbstractEventLoop | None = None
        self._subscribers: list[asyncio.Queue] = []
        self._subscribers_lock = threading.Lock()
        self._thread = threading.Thread(target=self._run, name="teleteach-sim", daemon=True)
        self.error: str | None = None

    # -- wiring ----------------------------------------------------------

    def start(self, loop: asyncio.AbstractEventLoop) -> None:
        self._loop = loop
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread.is_alive():
            self._thread.join(timeout=2.0)

    def subscribe(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=64)
        with self._subscribers_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        with self._subscribers_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    # -- client-facing state changes (called from the socket thread) ------

    def set_pointer(self, pointer, direct6) -> None:
        self._pointer = pointer
        self._direct = direct6

    def enqueue_command(self, command: dict) -> bool:
        try:
            self._commands.put_nowait(command)
            return True
        except queue.Full:
            return False

    def set_primary_connected(self, connected: bool) -> None:
        self._primary_connected = connected
        if not connected:
            self._pointer = None
            self._direct = np.zeros(6)

    # -- simulation side ---------------------------------------------------

    def _demo_wrench(self, t, tr):
        total = np.zeros(6)
        if self._script is not None and self._script.active(t):
            x_demo, xd_demo = skill_trajectory(self._script, t)
            total += human_arm_wrench(
                x_demo, xd_demo, tr, self.world.arm_gains, self.world.arm_f_max
            ).as_array()
        pointer = self._pointer
        if pointer is not None:
            target_p = tr.pose.p.copy()
            target_p[PLANE_AXES[0]] = pointer[0]
            target_p[PLANE_AXES[1]] = pointer[1]
            total += human_arm_wrench(
                Pose(target_p, tr.pose.q),
                np.zeros(6),
                tr,
                self.world.arm_gains,
                self.world.arm_f_max,
            ).as_array()
        total += self._direct
        f_max = self.world.arm_f_max
        return Wrench.from_array(np.clip(total, -f_max, f_max))

    def _apply_command(self, cmd: dict) -> None:
        name = cmd.get("name")
        if name == "reset":
            start = self.world.tr.pose
            fresh = build_world(self.cfg, start_pose=start)
            fresh.demo_source = self._demo_wrench
            fresh.collect_telemetry = False
            self.world = fresh
            self._script = None
            self._pointer = None
            self._direct = np.zeros(6)
        elif name == "set_param":
            key, value = cmd["key"], float(cmd["value"])
            _, field_name = key.split(".", 1)
            self.world.alloc_cfg = dataclasses.replace(
                self.world.alloc_cfg, **{field_name: value}
            )
        elif name == "start_script":
            factory = NAMED_SCRIPTS[cmd["id"]]
            self._script = factory(t_start=self.world.t, t_stop=math.inf)
        elif name == "stop_script":
            self._script = None
        elif name == "step":
            self._step_budget += int(cmd.get("ticks", 1))

    def _broadcast(self, payload: str) -> None:
        loop = self._loop
        if loop is None or loop.is_closed():
            return
        with self._subscribers_lock:
            queues = list(self._subscribers)

        def push():
            for q in queues:
                if q.full():
                    try:
                        q.get_nowait()  # drop oldest
                    except asyncio.QueueEmpty:
                        pass
                q.put_nowait(payload)

        try:
            loop.call_soon_threadsafe(push)
        except RuntimeError:
            pass

    def _tick_once(self) -> None:
        while not self._commands.empty():
            try:
                self._apply_command(self._commands.get_nowait())
            except (KeyError, ValueError) as exc:
                self._broadcast(json.dumps({"type": "error", "id": None, "detail": str(exc)}))
                continue
        self.world.collect_telemetry = False
        self.world.sim_tick()
        if self.world.tick_count % TELEMETRY_EVERY_TICKS == 0:
            self._broadcast('{"type":"telemetry",' + frame_to_json(self.world._frame())[1:])

    def _run(self) -> None:
        dt = self.world.cfg.dt
        next_t = time.perf_counter()
        try:
            while not self._stop.is_set():
                if self.realtime:
                    if not self._primary_connected:
                        next_t = time.perf_counter()
                        time.sleep(0.02)
                        continue
                    now = time.perf_counter()
                    if now < next_t:
                        time.sleep(min(next_t - now, 0.005))
                        continue
                    # catch up in bounded bursts if the host scheduler stalled
                    for _ in range(min(32, max(1, int((now - next_t) / dt)))):
                        self._tick_once()
                        next_t += dt
                else:
                    # lockstep: advance only on explicit step commands
                    if self._step_budget > 0:
                        self._step_budget -= 1
                        self._tick_once()
                    elif self._commands.empty():
                        time.sleep(0.0005)
                    else:
                        self._tick_once_commands_only()
        except DivergenceError as exc:
            self.error = str(exc)
            self._broadcast(json.dumps({"type": "error", "id": None, "detail": str(exc)}))

    def _tick_once_commands_only(self) -> None:
        while not self._commands.empty():
            try:
                self._apply_command(self._commands.get_nowait())
            except (KeyError, ValueError) as exc:
                self._broadcast(json.dumps({"type": "error", "id": None, "detail": str(exc)}))


def _hello_message(session: TeachSession, role: str) -> str:
    arm_k = session.world.arm_gains.k
    return json.dumps(
        {
            "type": "hello",
            "protocol": PROTOCOL_VERSION,
            "role": role,
            "plane": ["x", "z"],
            "arm_k": [arm_k[PLANE_AXES[0]], arm_k[PLANE_AXES[1]]],
            "lambda_f": session.world.alloc_cfg.lambda_f,
            "telemetry_hz": 1.0 / (session.world.cfg.dt * TELEMETRY_EVERY_TICKS),
        }
    )


def _validate_force_input(msg: dict) -> tuple[tuple[float, float] | None, np.ndarray]:
    pointer = msg.get("pointer")
    if pointer is not None:
        if (
            not isinstance(pointer, (list, tuple))
            or len(pointer) != 2
            or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in pointer)
        ):
            raise ValueError("pointer must be [x, z] in meters")
        pointer = (float(pointer[0]), float(pointer[1]))
    direct = np.zeros(6)
    for key, idx in (("fx", PLANE_AXES[0]), ("fy", PLANE_AXES[1])):
        value = msg.get(key, 0.0)
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ValueError(f"{key} must be a finite number")
        direct[idx] = float(value)
    mz = msg.get("mz", 0.0)
    if not isinstance(mz, (int, float)) or not math.isfinite(mz):
        raise ValueError("mz must be a finite number")
    direct[3 + MOMENT_AXIS] = float(mz)
    return pointer, direct


async def _session_handler(ws, session: TeachSession, primary_holder: dict) -> None:
    is_primary = primary_holder.get("client") is None
    if is_primary:
        primary_holder["client"] = ws
        session.set_primary_connected(True)
    q = session.subscribe()

    async def sender():
        while True:
            await ws.send(await q.get())

    send_task = asyncio.create_task(sender())
    await ws.send(_hello_message(session, "therapist" if is_primary else "observer"))
    last_seq = -1
    try:
        async for raw in ws:
            try:
                msg = json.loads(raw)
                if not isinstance(msg, dict):
                    raise ValueError("frame must be a JSON object")
            except (json.JSONDecodeError, ValueError) as exc:
                await ws.send(json.dumps({"type": "error", "id": None, "detail": str(exc)}))
                continue
            seq = msg.get("seq")
            if not isinstance(seq, int) or seq <= last_seq:
                await ws.send(
                    json.dumps(
                        {"type": "error", "id": seq, "detail": "seq must increase monotonically"}
                    )
                )
                continue
            last_seq = seq
            if not is_primary:
                await ws.send(
                    json.dumps({"type": "error", "id": seq, "detail": "read-only connection"})
                )
                continue
            kind = msg.get("type")
            if kind == "force_input":
                try:
                    pointer, direct = _validate_force_input(msg)
                except ValueError as exc:
                    await ws.send(json.dumps({"type": "error", "id": seq, "detail": str(exc)}))
                    continue
                session.set_pointer(pointer, direct)
                # force samples are not acked individually; they stream
            elif kind == "command":
                name = msg.get("name")
                if name not in ("reset", "set_param", "start_script", "stop_script", "step"):
                    await ws.send(
                        json.dumps({"type": "error", "id": seq, "detail": f"unknown command {name!r}"})
                    )
                    continue
                if name == "set_param" and msg.get("key") not in SETTABLE_PARAMS:
                    await ws.send(
                        json.dumps(
                            {"type": "error", "id": seq, "detail": f"parameter {msg.get('key')!r} is not settable"}
                        )
                    )
                    continue
                if name == "start_script" and msg.get("id") not in NAMED_SCRIPTS:
                    await ws.send(
                        json.dumps({"type": "error", "id": seq, "detail": f"unknown script {msg.get('id')!r}"})
                    )
                    continue
                if session.enqueue_command(msg):
                    await ws.send(json.dumps({"type": "ack", "id": seq}))
                else:
                    await ws.send(
                        json.dumps({"type": "error", "id": seq, "detail": "command queue full"})
                    )
            else:
                await ws.send(
                    json.dumps({"type": "error", "id": seq, "detail": f"unknown type {kind!r}"})
                )
    except ConnectionClosed:
        pass
    finally:
        send_task.cancel()
        session.unsubscribe(q)
        if is_primary:
            primary_holder["client"] = None
            session.set_primary_connected(False)


def _static_file_response(root: Path, request_path: str) -> Response:
    rel = request_path.lstrip("/") or "index.html"
    target = (root / rel).resolve()
    try:
        target.relative_to(root.resolve())
    except ValueError:
        return Response(HTTPStatus.FORBIDDEN, "Forbidden", Headers(), b"forbidden")
    if target.is_dir():
        target = target / "index.html"
    if not target.is_file():
        return Response(HTTPStatus.NOT_FOUND, "Not Found", Headers(), b"not found")
    ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
    body = target.read_bytes()
    headers = Headers()
    headers["Content-Type"] = ctype
    headers["Content-Length"] = str(len(body))
    return Response(HTTPStatus.OK, "OK", headers, body)


async def run_server(
    port: int,
    cfg: FullConfig | None = None,
    realtime: bool = True,
    static_root: str | Path | None = None,
    ready: asyncio.Event | None = None,
    stop: asyncio.Event | None = None,
) -> None:
    cfg = cfg or parse_config({})
    session = TeachSession(cfg, realtime=realtime)
    primary_holder: dict = {"client": None}
    root = Path(static_root) if static_root else Path.cwd() / "frontend" / "dist"

    def process_request(connection, request):
        if request.path.split("?")[0] == "/session":
            return None  # continue with the WebSocket handshake
        return _static_file_response(root, request.path.split("?")[0])

    async def handler(ws):
        await _session_handler(ws, session, primary_holder)

    session.start(asyncio.get_running_loop())
    try:
        async with ws_serve(handler, "127.0.0.1", port, process_request=process_request):
            print(f"session server on ws://127.0.0.1:{port}/session (panel root: {root})")
            if ready is not None:
                ready.set()
            if stop is not None:
                await stop.wait()
            else:
                await asyncio.Future()
    finally:
        session.stop()
        if session.error:
            raise DivergenceError(session.error)


def serve(port: int, cfg: FullConfig | None = None, realtime: bool = True,
          static_root: str | Path | None = None) -> None:
    """Blocking entry point used by the CLI."""
    asyncio.run(run_server(port, cfg, realtime=realtime, static_root=static_root))
