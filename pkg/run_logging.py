import datetime
import logging
import os
import time

LOGGER_NAME = "gauss_kit"
EVENT_FILE = "Gauss_Run_Data.txt"
DEBUG_FILE = "gauss_kit_debug_log.txt"

_run_start = time.monotonic()


def setup_logging(output_dir=None, debug_mode=False):
    """Console handler plus an append-mode debug log in the output directory."""
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(logging.DEBUG if debug_mode else logging.INFO)

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter("%(asctime)s %(levelname)s %(message)s")

    console = logging.StreamHandler()
    console.setFormatter(formatter)
    logger.addHandler(console)

    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
        file_handler = logging.FileHandler(os.path.join(output_dir, DEBUG_FILE), mode="a", encoding="utf-8")
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger


def format_elapsed(elapsed_seconds):
    if elapsed_seconds is None:
        return "00:00:00"

    hours, remainder = divmod(int(elapsed_seconds), 3600)
    minutes, seconds = divmod(remainder, 60)

    return f"{hours:02d}:{minutes:02d}:{seconds:02d}"


def log_run_event(
    base_dir,
    event_type,
    command=None,
    t=None,
    detail=None,
    elapsed_seconds=None
):
    now = datetime.datetime.now()
    local_time = now.strftime("%Y-%m-%d %H:%M:%S")

    if elapsed_seconds is None:
        elapsed_seconds = time.monotonic() - _run_start

    fields = [
        local_time,
        format_elapsed(elapsed_seconds),
        event_type,
        command if command else "",
        f"{t:.10g}" if t is not None else "",
        detail if detail else ""
    ]

    event_line = "|".join(str(field) for field in fields)
    txt_file = os.path.join(base_dir, EVENT_FILE)

    try:
        os.makedirs(base_dir, exist_ok=True)

        with open(txt_file, "a", encoding="utf-8") as f:
            f.write(event_line + "\n")
        return True

    except OSError as e:
        logging.getLogger(LOGGER_NAME).debug(f"Error logging run event: {e}")
        return False


def read_run_events(base_dir, event_type=None):
    txt_file = os.path.join(base_dir, EVENT_FILE)
    events = []

    if not os.path.exists(txt_file):
        return events

    with open(txt_file, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()

            if not line:
                continue

            fields = line.split("|")

            if len(fields) < 6:
                continue

            if event_type is None or fields[2].strip() == event_type:
                events.append({
                    "local_time": fields[0],
                    "elapsed": fields[1],
                    "event": fields[2],
                    "command": fields[3],
                    "t": fields[4],
                    "detail": fields[5]
                })

    return events
