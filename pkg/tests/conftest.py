import logging

from hypothesis import settings

# fixed example streams keep test runs reproducible
settings.register_profile("repo", deadline=None, derandomize=True, max_examples=100)
settings.load_profile("repo")
logging.getLogger("rcmtrack").setLevel(logging.ERROR)
