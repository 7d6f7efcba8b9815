from .app import ServiceState, create_app, load_state, serve
from .wire import ApiDesignState, from_api, to_api
