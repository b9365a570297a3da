DASH = '-'


def pct(value):
    """Fraction -> percentage with two decimals; missing values render as a dash."""
    if value is None:
        return DASH
    return f"{100.0 * value:.2f}"


def fixed2(value):
    if value is None:
        return DASH
    return f"{value:.2f}"


def md_cell(value):
    """Escape a value for use inside a Markdown table cell."""
    if value is None:
        return DASH
    return str(value).replace('|', '\\|').replace('\n', ' ')


FILTERS = {'pct': pct, 'fixed2': fixed2, 'md_cell': md_cell}


def register(env):
    env.filters.update(FILTERS)
    return env


def init_app(app):
    """Register custom filters with the Flask app."""
    register(app.jinja_env)
