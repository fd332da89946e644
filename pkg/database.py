"""
Shared utilities for the results database of convergence studies.
"""

SCHEMA = """
CREATE TABLE IF NOT EXISTS runs(
    study TEXT,
    geometry TEXT,
    resolution INT,
    contrast REAL,
    component INT,
    effective REAL,
    expected REAL,
    relative_error REAL,
    iterations INT,
    converged INT,
    method TEXT,
    seconds REAL
);
"""


def init_db(conn):
    """
    Initialize the database with the schema.
    """
    with conn:
        conn.executescript(SCHEMA)


def insert_batch(conn, rows):
    """
    Insert the rows of one run into the database.
    """
    with conn:
        conn.executemany(
            """
            INSERT INTO runs (study, geometry, resolution, contrast, component,
                              effective, expected, relative_error, iterations,
                              converged, method, seconds)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            """,
            rows,
        )
