class H2JetError(Exception):
    exit_code = 1


class ScenarioParseError(H2JetError):
    exit_code = 2


class PhysicsDomainError(H2JetError, ValueError):
    exit_code = 3


class TrainingDivergedError(H2JetError):
    exit_code = 4
