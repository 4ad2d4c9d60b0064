# run_experiments.py

import logging
import os
import sys

from memory_profiler import memory_usage

sys.path.insert(0, os.path.abspath(os.path.dirname(__file__)))

from src.cli import cli_main
from src.config import LOG_FORMAT, RUNTIME_CONFIG

# Log to a file; the console only carries the command's own result lines.
logging.basicConfig(
    level=RUNTIME_CONFIG.log_level,
    format=LOG_FORMAT,
    filename=RUNTIME_CONFIG.LOG_FILE,
    filemode='w'
)


def main(argv):
    if '--profile-memory' not in argv:
        return cli_main(argv)

    argv = [arg for arg in argv if arg != '--profile-memory']
    logging.info("Running command with memory profiling...")
    memory_measurements, exit_code = memory_usage((cli_main, (argv,), {}),
                                                  interval=0.1,
                                                  include_children=True,
                                                  retval=True)
    if memory_measurements:
        logging.info(f"Peak Memory Usage (from memory_usage function): {max(memory_measurements):.2f} MB")
    else:
        logging.error("Memory profiling didn't return valid measurements from memory_usage.")
    return exit_code


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
