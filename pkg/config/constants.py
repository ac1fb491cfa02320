"""
Engine Constants
Fixed vocabularies, label spaces and wire markers shared across the engine
"""


class EngineConstants:
    """Constants for the hierarchical retrieval engine"""

    VERSION = '1.0.0'

    # Label spaces per task kind. Binary tasks keep "no" first so that the
    # label index doubles as the 0/1 outcome.
    TASK_LABELS = {
        'DEC': ['no', 'yes'],
        'READ': ['no', 'yes'],
        'LOS': [
            '<1 day', '1 day', '2 days', '3 days', '4 days',
            '5 days', '6 days', '7 days', '8-14 days', '>14 days'
        ]
    }

    TASK_DESCRIPTIONS = {
        'DEC': ("24h-decompensation prediction: decide whether the patient will "
                "suffer acute physiological decompensation within the next 24 hours "
                "of the latest visit."),
        'READ': ("Readmission prediction: decide whether the patient will be "
                 "readmitted within 15 days after the latest visit shown."),
        'LOS': ("Length-of-stay prediction: estimate the length of the latest stay "
                "and choose the matching interval.")
    }

    # Right-open bin edges in days; np.digitize maps a stay onto the LOS index.
    LOS_BIN_EDGES = [1, 2, 3, 4, 5, 6, 7, 8, 15]

    READMISSION_WINDOW_DAYS = 15

    # Output grammar markers
    MARKERS = {
        'route': 'ROUTE:',
        'ids': 'IDS:',
        'control': 'CONTROL:',
        'answer_open': '<answer>',
        'answer_close': '</answer>',
        'subquery': 'SUBQUERY:'
    }

    # Template tags; the mock provider matches on these
    TEMPLATE_TAGS = {
        'rewrite': 'query_rewrite',
        'decide': 'top_decide',
        'llm_answer': 'llm_answer',
        'summarize': 'low_summarize',
        'deepen': 'deepen',
        'finalize': 'finalize'
    }

    ABLATIONS = ['none', 'NI', 'NT', 'NL', 'NM', 'NS']

    NORMALIZATION_MODES = ['none', 'clamp', 'running_zscore']
    RANK_MODES = ['literal', 'margin', 'off']
    CRITIC_TARGETS = ['reward_to_go', 'immediate']

    NORMALIZATION_LIMITS = {
        'clamp_bound': 5.0,
        'std_floor': 1e-8
    }

    PATH_PENALTIES = {
        'erroneous': 0.5,
        'repeated': 0.5
    }

    EXIT_CODES = {
        'success': 0,
        'user_error': 1,
        'internal_error': 2
    }

    # Mock embedding: fixed dimension, basis vector used for empty text
    MOCK_EMBEDDING = {
        'dim': 64,
        'seed': 0,
        'null_axis': 0
    }

    CROCKFORD_ALPHABET = '0123456789ABCDEFGHJKMNPQRSTVWXYZ'
