import math
import threading
import time

import pytest

import app as app_module
from models.data_models import RunConfig


@pytest.fixture
def client():
    app_module.current_run.clear()
    app_module.processing_status.update({'is_processing': False, 'progress': 0, 'message': 'Ready'})
    app_module.app.config['TESTING'] = True
    with app_module.app.test_client() as client:
        yield client
    app_module.current_run.clear()


def wait_for_run(client, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        status = client.get('/api/status').get_json()
        if not status['is_processing']:
            return status
        time.sleep(0.05)
    raise AssertionError("background run did not finish")


def test_index_lists_commands(client):
    body = client.get('/').get_json()
    assert 'split-identity' in body['commands']
    assert body['version']


def test_results_are_empty_before_any_run(client):
    response = client.get('/api/results')
    assert response.status_code == 404
    assert response.get_json()['has_results'] is False


@pytest.mark.parametrize("payload, field", [
    ({'command': 'teleport'}, 'command'),
    ({'lambda': 1.0}, 'command'),
    ({'command': 'simulate', 'lambda': 1.0, 'T': 5.0}, 'seed'),
    ({'command': 'entropy', 'output_format': 'csv'}, 'output_format'),
])
def test_invalid_requests_are_rejected(client, payload, field):
    response = client.post('/api/run', json=payload)
    assert response.status_code == 400
    assert response.get_json()['field'] == field


def test_body_must_be_json(client):
    assert client.post('/api/run', data='not json').status_code == 400


def test_run_in_the_background(client):
    response = client.post('/api/run', json={'command': 'split-identity', 'lambda': 1.0, 'p': 0.5})
    assert response.status_code == 202
    assert response.get_json() == {'accepted': True, 'command': 'split-identity'}

    status = wait_for_run(client)
    assert status['has_results']
    assert status['message'] == 'Run complete'
    results = client.get('/api/results').get_json()
    assert results['exit_status'] == 0
    assert results['report']['results']['lhs'] == pytest.approx(1 + math.log(2))


def test_inline_documents_replace_paths(client):
    documents = {'dist': {'atoms': [{'label': 'H', 'mass': 0.5, 'density': {'family': 'uniform', 'a': 0, 'b': 1}},
                                    {'label': 'T', 'mass': 0.5, 'density': {'family': 'uniform', 'a': 0, 'b': 1}}]}}
    response = client.post('/api/run', json={'command': 'entropy', 'documents': documents})
    assert response.status_code == 202
    wait_for_run(client)
    report = client.get('/api/results').get_json()['report']
    assert report['results']['entropy']['value'] == pytest.approx(math.log(2), abs=1e-8)


def test_second_run_is_refused_while_busy(client):
    app_module.processing_status['is_processing'] = True
    response = client.post('/api/run', json={'command': 'split-identity', 'lambda': 1.0, 'p': 0.5})
    assert response.status_code == 409


def test_failed_claim_is_reported_with_its_status():
    app_module.current_run.clear()
    app_module.process_run_async(RunConfig('split-identity', lam=1.0, p=0.5, tol=-1.0,
                                           output_format='structured'))
    assert app_module.current_run['exit_status'] == 1
    assert app_module.processing_status['message'] == 'Run finished with status 1'
    app_module.current_run.clear()


def test_background_status_updates_wait_for_the_lock():
    app_module.current_run.clear()
    app_module.processing_status.update({'is_processing': True, 'progress': 0, 'message': 'Queued'})
    worker = threading.Thread(target=app_module.process_run_async,
                              args=(RunConfig('split-identity', lam=1.0, p=0.5, output_format='structured'),))
    with app_module.status_lock:
        worker.start()
        time.sleep(0.2)
        assert app_module.processing_status['message'] == 'Queued'
        assert app_module.processing_status['progress'] == 0
    worker.join(timeout=30)
    assert app_module.processing_status['message'] == 'Run complete'
    app_module.current_run.clear()
