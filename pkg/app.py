from flask import Flask, request, jsonify
import json
from datetime import datetime
import threading
import io
import os
import logging

from cli import run
from config.settings import Config
from models.data_models import COMMANDS, RunConfig
from models.errors import SpecValidationError
from services import __version__

app = Flask(__name__)
app.config['SECRET_KEY'] = Config.SECRET_KEY

# Configure basic logging for the application
logging.basicConfig(
    level=getattr(logging, str(Config.LOG_LEVEL).upper(), logging.INFO),
    format='%(asctime)s [%(levelname)s] %(name)s: %(message)s'
)
logger = logging.getLogger('mpe')

# One run at a time; results of the last finished run are kept in memory
current_run = {}
processing_status = {'is_processing': False, 'progress': 0, 'message': 'Ready'}
status_lock = threading.Lock()

RUN_FIELDS = {'command', 'spec', 'dist', 'map', 'chain', 'samples', 'lam', 'p', 'T', 'trials', 'seed',
              'epsilon', 'delta', 'tol', 'n', 'k', 'method', 'discrete', 'allow_uncertified', 'documents'}


@app.route('/')
def index():
    """Service description"""
    return jsonify({'service': 'mixed-pair entropy', 'version': __version__, 'commands': list(COMMANDS)})


def run_config_from_json(payload) -> RunConfig:
    if not isinstance(payload, dict):
        raise SpecValidationError("request body must be a JSON object")
    unknown = sorted(set(payload) - RUN_FIELDS - {'lambda'})
    if unknown:
        raise SpecValidationError(f"unknown fields {unknown}", field=unknown[0])
    fields = {k: v for k, v in payload.items() if k in RUN_FIELDS}
    if 'lambda' in payload:
        fields['lam'] = payload['lambda']
    if 'command' not in fields:
        raise SpecValidationError("missing field 'command'", field='command')
    documents = fields.get('documents') or {}
    # inline documents stand in for paths
    for name in documents:
        fields.setdefault(name, f'<inline {name}>')
    run_config = RunConfig(**fields, output_format='structured')
    return run_config.validate()


@app.route('/api/run', methods=['POST'])
def start_run():
    """Validate a run request and start it in the background"""
    try:
        run_config = run_config_from_json(request.get_json(silent=True))
    except SpecValidationError as e:
        return jsonify({'error': str(e), 'field': e.field}), 400

    with status_lock:
        if processing_status['is_processing']:
            return jsonify({'error': 'A run is already in progress'}), 409
        processing_status.update({'is_processing': True, 'progress': 0,
                                  'message': f'Queued - {run_config.command}'})

    logger.info("Starting background run: %s", run_config.command)
    thread = threading.Thread(target=process_run_async, args=(run_config,))
    thread.daemon = True
    thread.start()
    return jsonify({'accepted': True, 'command': run_config.command}), 202


def process_run_async(run_config: RunConfig):
    """Run a command in the background and keep its structured report"""
    try:
        with status_lock:
            processing_status.update({'progress': 10, 'message': f'Running {run_config.command}...'})
        buffer = io.StringIO()
        status = run(run_config, stream=buffer)
        report = json.loads(buffer.getvalue())
        with status_lock:
            current_run.clear()
            current_run.update({'exit_status': status, 'report': report,
                                'timestamp': datetime.now().isoformat()})
            processing_status.update({'is_processing': False, 'progress': 100,
                                      'message': 'Run complete' if status == 0 else f'Run finished with status {status}'})
        logger.info("Run %s finished with status %d", run_config.command, status)

    except Exception as e:
        logger.exception("Error in background run: %s", run_config.command)
        with status_lock:
            processing_status.update({'is_processing': False, 'progress': 0, 'message': f'Error: {str(e)}'})


@app.route('/api/status')
def get_status():
    """Get processing status"""
    logger.debug("Status requested: %s", processing_status)
    status_copy = processing_status.copy()
    status_copy['server_pid'] = os.getpid()
    status_copy['has_results'] = bool(current_run)
    status_copy['last_checked'] = datetime.now().isoformat()
    return jsonify(status_copy)


@app.route('/api/results')
def get_results():
    """Get the report of the last finished run"""
    if not current_run:
        logger.info("/api/results requested but no run has finished yet (PID=%s)", os.getpid())
        return jsonify({'error': 'No results available', 'has_results': False}), 404
    return jsonify(current_run)


if __name__ == '__main__':
    # The reloader would run background threads in a different process from the server.
    logger.info("Starting Flask app; server PID=%s", os.getpid())
    app.run(debug=True, threaded=True, use_reloader=False)
