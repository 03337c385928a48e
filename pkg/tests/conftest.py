# keeps the tests directory on sys.path so the oracle helpers import cleanly
