# SPDX-License-Identifier: GPL-2.0-or-later
import logging
import sys
import traceback

from cli.commands import UsageError, run
from constants import EXIT_FAILURE, EXIT_USAGE
from util import init_logger


def exception_hook(exc_type, exc_value, exc_traceback):
    if issubclass(exc_type, KeyboardInterrupt):
        sys.__excepthook__(exc_type, exc_value, exc_traceback)
        return
    log_msg = '\n'.join([''.join(traceback.format_tb(exc_traceback)),
                         '{0}: {1}'.format(exc_type.__name__, exc_value)])
    logging.error(log_msg)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    init_logger(verbose="-v" in argv or "--verbose" in argv)
    try:
        return run(argv)
    except UsageError as e:
        logging.error(str(e))
        print("hebbcbir: error: {}".format(e), file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        exception_hook(*sys.exc_info())
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.excepthook = exception_hook
    sys.exit(main())
