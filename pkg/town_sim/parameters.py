class Parameters:
    """
    Global default parameters of the simulator. Every value can be overridden in the
    `sim` section of a scenario file.
    """

    # Clock
    DAYS = 7
    TICKS_PER_DAY = 24
    SEED = 42
    WAKE_TICK = 7
    SLEEP_TICK = 22
    MEAL_WINDOWS = {"breakfast": (7, 10), "lunch": (11, 14), "dinner": (17, 20)}
    WORK_HOURS = (9, 17)
    WORK_DAYS = (1, 2, 3, 4, 5)
    WEEKEND_DAYS = (6, 7)
    AFTERNOON = (13, 17)

    # Needs triad
    MAX_ENERGY = 100
    MAX_GROCERY = 100
    STARTING_ENERGY = 100
    STARTING_GROCERY = 60
    BASE_DECAY = 2
    WORK_DECAY = 3
    TRAVEL_COST = 1
    HOME_MEAL_ENERGY = 30
    MEAL_GROCERY_COST = 25
    GROCERY_THRESHOLD = 30
    EMERGENCY_THRESHOLD = 20
    MEAL_MIN_ENERGY = 30

    # Memory
    HALF_LIFE = 24
    WEIGHT_TIME = 0.6
    WEIGHT_RELATIONSHIP = 0.4
    MAX_MEMORIES = 10
    HABIT_WINDOW_DAYS = 7

    # Scripted oracle
    DISCOUNT_BONUS = 5.0
    DISTANCE_COST = 0.2
    HABIT_BONUS = 0.5
    CONVERSATION_MIN_ENERGY = 25
    INVITATION_TICK = 20
    INVITATION_MEAL_TICK = 9
    INVITATION_MIN_PROXIMITY = 0.7

    # Decisions
    MAX_RETRIES = 2
    SUBSTITUTION_TOLERANCE = 0.10

    # Remote backend
    REMOTE_TEMPERATURE = 0.7
    REMOTE_TIMEOUT = 60
    REMOTE_MAX_IN_FLIGHT = 4
    UNAVAILABLE_AFTER = 3

    # Diagnostics
    RECENT_EVENTS_ON_BREACH = 50
